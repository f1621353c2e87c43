use std::fs;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use ris_amc::cnn::{Architecture, Model};
use ris_amc::error::Error;
use ris_amc::harness::checkpoint;
use ris_amc::harness::dataset_io::{read_dataset, FRAMES_FILE, HEADER_LEN, MANIFEST_FILE};
use ris_amc::harness::reports::{confusion_tsv, table_rows, Provenance};
use ris_amc::harness::scenario::NoiseFloor;
use ris_amc::harness::spectrogram::spectrogram;
use ris_amc::harness::*;
use ris_amc::impairments::Partition;
use ris_amc::metrics::ConfusionMatrix;
use ris_amc::ris::{RisConfiguration, User};
use ris_amc::sigsynth::{synthesize_frame, ModulationScheme, ShapingConfig, FRAME_LEN, SAMPLE_RATE_HZ};

/// A scenario small enough to train and search in seconds.
fn tiny() -> Scenario {
    let mut s = Scenario::default();
    s.seed = 17;
    s.dataset.frames_per_class = 10;
    s.architecture.filters = vec![4, 4];
    s.train.batch_size = 16;
    s.train.max_epochs = 2;
    s.optimizer.frames_per_class = 2;
    s.optimizer.report_frames_per_class = 2;
    s.optimizer.max_evaluations = 30;
    s.optimizer.max_sweeps = 1;
    s.geometry.noise_floor_dbm = NoiseFloor::Fixed([-60.0, -60.0]);
    s
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn scenario_text_round_trip_and_hash() {
    let s = tiny();
    let back = Scenario::parse(&s.to_toml()).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.hash(), s.hash());
    assert_ne!(s.hash(), Scenario::default().hash());
    assert_eq!(s.hash().len(), 64);
}

#[test]
fn scenario_defaults_and_partial_files() {
    let s = Scenario::parse("format = \"ris-amc-scenario\"\nversion = 1\n[train]\nmax_epochs = 3\n").unwrap();
    assert_eq!(s.train.max_epochs, 3);
    assert_eq!(s.dataset.frames_per_class, 5000);
    assert_eq!(s.geometry.noise_floor_dbm, NoiseFloor::auto());
    assert_eq!(s.train_config().batch_size, 256);
    let f = Scenario::parse("[geometry]\nnoise_floor_dbm = [-40.0, -41.5]\n").unwrap();
    assert_eq!(f.fixed_noise_floor(), Some([-40.0, -41.5]));
}

#[test]
fn scenario_errors() {
    assert!(matches!(Scenario::parse("colour = 3"), Err(Error::Config(_))));
    assert!(matches!(Scenario::parse("format = \"x\""), Err(Error::BadMagic { .. })));
    assert!(matches!(Scenario::parse("version = 9"), Err(Error::UnsupportedVersion { .. })));
    assert!(matches!(Scenario::parse("[optimizer]\nstrategy = \"annealing\""), Err(Error::Config(_))));
    assert!(matches!(Scenario::parse("[geometry]\nnoise_floor_dbm = \"loud\""), Err(Error::Config(_))));
    assert!(Scenario::parse("[dataset]\nsplit = [0.5, 0.5, 0.5]").is_err());
    assert!(matches!(Scenario::parse("[optimizer]\naccuracy_tolerance = -0.1"), Err(Error::Config(_))));
    assert!(matches!(Scenario::parse("[train]\nweight_decay = -1.0"), Err(Error::Config(_))));
    assert!(matches!(Scenario::parse("[architecture]\nhead = \"max\""), Err(Error::Config(_))));
}

#[test]
fn gen_smoke_is_fast_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let s = tiny();
    let t = Instant::now();
    run_gen(&s, &dir.path().join("a")).unwrap();
    assert!(t.elapsed().as_secs_f64() < 5.0, "{:?}", t.elapsed());
    run_gen(&s, &dir.path().join("b")).unwrap();
    for f in [FRAMES_FILE, MANIFEST_FILE] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    let size = fs::metadata(dir.path().join("a").join(FRAMES_FILE)).unwrap().len() as usize;
    assert_eq!(size, 50 * FRAME_LEN * 8 + HEADER_LEN);
    let manifest = read(&dir.path().join("a").join(MANIFEST_FILE));
    for m in ModulationScheme::ALL {
        assert!(manifest.contains(&format!("class = {m} 10\n")), "{m}");
    }
    assert!(manifest.contains(&format!("spec_hash = {}\n", s.hash())));
    assert!(manifest.contains("master_seed = 17\n"));
    let (d, hash) = read_dataset(&dir.path().join("a")).unwrap();
    assert_eq!(hash, s.hash());
    assert_eq!(d.class_counts(Partition::Train), [8; 5]);
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = tiny();
    run_gen(&s, &dir.path().join("data")).unwrap();
    let mut epochs = Vec::new();
    let out = run_train(&s, &dir.path().join("data"), &dir.path().join("run"), |r| epochs.push(r.epoch)).unwrap();
    assert_eq!(epochs, [1, 2]);

    let history = read(&dir.path().join("run").join(HISTORY_FILE));
    assert!(history.contains("# seed = 17"));
    assert!(history.contains(&format!("# spec_hash = {}", s.hash())));
    let rows = table_rows(&history);
    assert_eq!(rows.len(), 2);
    // 40 training frames in batches of 16
    assert!(rows.iter().all(|r| r[1] == "2"));

    let model = load_model(&dir.path().join("run").join(MODEL_FILE), Some(&s)).unwrap();
    assert_eq!(model, out.best_model);
    let last = checkpoint::load(&dir.path().join("run").join(FINAL_MODEL_FILE)).unwrap();
    assert_eq!(last.model, out.final_model);
    assert_eq!(last.metadata["seed"], "17");

    let source = EvalSource::Dataset {
        dir: dir.path().join("data"),
        partition: Partition::Test,
    };
    let cm = run_evaluate(&model, &s, &source, &dir.path().join("eval")).unwrap();
    assert_eq!(cm.row_totals(), [1; 5]);
    let counts = read(&dir.path().join("eval").join("confusion_dataset-test_counts.tsv"));
    let pct = read(&dir.path().join("eval").join("confusion_dataset-test_percent.tsv"));
    assert!(counts.contains("# seed = 17") && pct.contains("# seed = 17"));
    assert_eq!(table_rows(&counts).len(), 5);

    let mut other = s.clone();
    other.architecture.filters = vec![4, 4, 4];
    assert!(matches!(
        load_model(&dir.path().join("run").join(MODEL_FILE), Some(&other)),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn perfect_classification_gives_a_diagonal_report() {
    let mut cm = ConfusionMatrix::default();
    for m in ModulationScheme::ALL {
        for _ in 0..100 {
            cm.record(m, m);
        }
    }
    let (counts, pct) = confusion_tsv(&Provenance::new(1, "h"), &cm);
    for (i, (c, p)) in table_rows(&counts).iter().zip(table_rows(&pct)).enumerate() {
        for j in 0..5 {
            assert_eq!(c[j + 1], if i == j { "100" } else { "0" });
            assert_eq!(p[j + 1], if i == j { "100.00" } else { "0.00" });
        }
    }
}

#[test]
fn snr_evaluation_uses_report_frames() {
    let s = tiny();
    let model = Model::build(s.architecture(), 1).unwrap();
    let cm = evaluate_source(&model, &s, &EvalSource::Snr(5.0)).unwrap();
    assert_eq!(cm.row_totals(), [2; 5]);
    assert_eq!(frames_at_snr(&s, 5.0).unwrap(), frames_at_snr(&s, 5.0).unwrap());
}

#[test]
fn untrained_model_calibrates_to_grid_top() {
    let mut s = tiny();
    s.calibration.grid_min_db = 0.0;
    s.calibration.grid_max_db = 4.0;
    s.calibration.grid_step_db = 2.0;
    // a fresh model predicts BPSK for everything: accuracy 0.2
    let model = Model::build(s.architecture(), 1).unwrap();
    let c = calibrate(&model, &s).unwrap();
    assert_eq!(c.curve.iter().map(|p| p.0).collect::<Vec<_>>(), [0.0, 2.0, 4.0]);
    assert!(c.curve.iter().all(|p| p.1 == 0.2));
    assert_eq!(c.chance_edge_db, 4.0);
    assert_eq!(c.start_snr_db, -1.0);
    let g = s.geometry_with_floor(c.noise_floor_dbm);
    for u in User::BOTH {
        assert!((ris_amc::ris::mean_random_snr(&g, u).unwrap() - -1.0).abs() < 1e-9);
    }

    s.calibration.chance_accuracy = 0.1;
    assert!(matches!(calibrate(&model, &s), Err(Error::Config(_))));
}

#[test]
fn optimize_writes_reports_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let s = tiny();
    let model = Model::build(Architecture::with_filters(&[4, 4], 8), 3).unwrap();
    let a = run_optimize(&model, &s, &dir.path().join("a"), |_| {}).unwrap();
    run_optimize(&model, &s, &dir.path().join("b"), |_| {}).unwrap();
    assert_eq!(a.runs.len(), 3);
    let mut files: Vec<String> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    for name in ["user1", "user2", "joint-min"] {
        assert!(files.contains(&format!("trace_{name}.tsv")), "{files:?}");
        assert!(files.contains(&format!("best_{name}.txt")));
        assert!(files.contains(&format!("confusion_{name}_best_user2_percent.tsv")));
    }
    assert!(files.contains(&"pairs.tsv".to_string()));
    for f in &files {
        let text = read(&dir.path().join("a").join(f));
        assert_eq!(text, read(&dir.path().join("b").join(f)), "{f}");
        if f.ends_with(".tsv") {
            assert!(text.contains("# seed = 17") && text.contains(&s.hash()), "{f}");
        }
    }
    for run in &a.runs {
        assert!(run.result.evaluations <= 30);
        let hex = read(&dir.path().join("a").join(format!("best_{}.txt", run.target.name())));
        assert_eq!(RisConfiguration::from_hex(hex.trim(), 304).unwrap(), run.result.best_config);
    }
    let pairs = a.pairs.unwrap();
    assert!(pairs.rows.len() > 3);
}

#[test]
fn gain_objective_runs_without_a_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = tiny();
    s.optimizer.objective = "gain".into();
    s.optimizer.targets = vec!["user2".into()];
    s.optimizer.max_evaluations = 400;
    let model = Model::build(s.architecture(), 0).unwrap();
    let sum = run_optimize(&model, &s, dir.path(), |_| {}).unwrap();
    let r = &sum.runs[0].result;
    assert!(r.best_value > 0.5, "{}", r.best_value);
    assert!(dir.path().join("trace_user2.tsv").exists());

    s.optimizer.targets = vec!["joint-min".into()];
    assert!(matches!(run_optimize(&model, &s, dir.path(), |_| {}), Err(Error::Config(_))));
}

#[test]
fn bpsk_energy_sits_in_the_occupied_band() {
    let shaping = ShapingConfig::default();
    let f = synthesize_frame(ModulationScheme::Bpsk, &shaping, 5).unwrap();
    let sg = spectrogram(&f.samples, 128, 64).unwrap();
    assert_eq!(sg.rows(), (2048 - 128) / 64 + 1);
    let half_band = (1.0 + shaping.rolloff) * shaping.symbol_rate(SAMPLE_RATE_HZ) / 2.0;
    // allow the Hann main lobe (two bins) beyond the band edge
    let edge = half_band + 2.0 * SAMPLE_RATE_HZ / 128.0;
    let (mut inside, mut total) = (0.0, 0.0);
    for t in 0..sg.rows() {
        for (k, v) in sg.row(t).iter().enumerate() {
            total += v * v;
            if sg.bin_frequency(k, SAMPLE_RATE_HZ).abs() <= edge {
                inside += v * v;
            }
        }
    }
    assert!(inside / total > 0.99, "{}", inside / total);

    // the same fraction from one DFT of the whole frame
    let n = f.samples.len();
    let (mut inside, mut total) = (0.0, 0.0);
    for k in 0..n {
        let freq = if k < n / 2 { k as f64 } else { k as f64 - n as f64 } * SAMPLE_RATE_HZ / n as f64;
        let x: Complex64 = f
            .samples
            .iter()
            .enumerate()
            .map(|(i, z)| z * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * i % n) as f64 / n as f64))
            .sum();
        total += x.norm_sqr();
        if freq.abs() <= half_band * 1.05 {
            inside += x.norm_sqr();
        }
    }
    assert!(inside / total > 0.99, "{}", inside / total);
}

#[test]
fn spectrogram_command_writes_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let s = tiny();
    run_gen(&s, &dir.path().join("data")).unwrap();
    let out = dir.path().join("sg").join("s.tsv");
    run_spectrogram(&dir.path().join("data"), 3, &out, 128, 64).unwrap();
    let text = read(&out);
    assert!(text.contains("# record = 3"));
    let rows = table_rows(&text);
    assert_eq!(rows.len(), 31);
    assert!(rows.iter().all(|r| r.len() == 129));
    assert!(matches!(
        run_spectrogram(&dir.path().join("data"), 50, &out, 128, 64),
        Err(Error::IndexOutOfRange { index: 50, len: 50 })
    ));
}
