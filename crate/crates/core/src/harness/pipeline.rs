//! End-to-end drivers behind the command-line subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cnn::{evaluate, train_with_progress, EpochRecord, Model, TrainOutcome};
use crate::error::{Error, Result};
use crate::harness::checkpoint::{self, Checkpoint};
use crate::harness::dataset_io::{read_dataset, write_dataset};
use crate::harness::reports::{self, Provenance};
use crate::harness::scenario::{stream, Scenario};
use crate::harness::spectrogram::spectrogram;
use crate::impairments::{derive_seed, generate_dataset, impair, Dataset, ImpairmentProfile, Partition};
use crate::metrics::ConfusionMatrix;
use crate::optimizer::{
    evaluation_frames, exhaustive, greedy_restarts, multi_user_sweep, random_search, visited_configs,
    AccuracyObjective, CachedObjective, GainObjective, GreedyOptions, JointObjective,
    OptimizationResult, SweepTable, Target,
};
use crate::ris::{calibrate_noise_floor, RisConfiguration, SceneGeometry, User};
use crate::sigsynth::{LabeledFrame, SAMPLE_RATE_HZ};

pub const MODEL_FILE: &str = "model.ckpt";
pub const FINAL_MODEL_FILE: &str = "final.ckpt";
pub const HISTORY_FILE: &str = "history.tsv";

fn provenance(s: &Scenario) -> Provenance {
    Provenance::new(s.seed, s.hash())
}

/// Generate the dataset described by the scenario and write it to `out`.
pub fn run_gen(scenario: &Scenario, out: &Path) -> Result<Dataset> {
    let d = generate_dataset(&scenario.dataset_spec())?;
    write_dataset(out, &d, &scenario.hash())?;
    Ok(d)
}

/// Fresh model from the scenario's architecture and seed, trained on the
/// dataset's train partition and validated on its validation partition.
pub fn train_on(scenario: &Scenario, dataset: Dataset, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    let model = Model::build(scenario.architecture(), scenario.derived_seed(stream::INIT))?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for r in dataset.records {
        match r.partition {
            Partition::Train => train.push(r.frame),
            Partition::Val => val.push(r.frame),
            Partition::Test => {}
        }
    }
    train_with_progress(model, &train, &val, &scenario.train_config(), on_epoch)
}

fn checkpoint_of(model: &Model<f32>, scenario: &Scenario, extra: &[(&str, String)]) -> Checkpoint {
    let mut metadata = BTreeMap::new();
    metadata.insert("seed".into(), scenario.seed.to_string());
    metadata.insert("spec_hash".into(), scenario.hash());
    for (k, v) in extra {
        metadata.insert((*k).into(), v.clone());
    }
    Checkpoint {
        model: model.clone(),
        metadata,
    }
}

/// Train on the dataset in `dataset_dir`; writes the best-validation
/// checkpoint, the final-epoch checkpoint and the history table to `out`.
pub fn run_train(
    scenario: &Scenario,
    dataset_dir: &Path,
    out: &Path,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let (dataset, dataset_hash) = read_dataset(dataset_dir)?;
    let outcome = train_on(scenario, dataset, on_epoch)?;
    fs::create_dir_all(out)?;
    let extra = [
        ("dataset_spec_hash", dataset_hash.clone()),
        ("best_epoch", outcome.best_epoch.to_string()),
    ];
    checkpoint::save(&out.join(MODEL_FILE), &checkpoint_of(&outcome.best_model, scenario, &extra))?;
    checkpoint::save(&out.join(FINAL_MODEL_FILE), &checkpoint_of(&outcome.final_model, scenario, &extra))?;
    let p = provenance(scenario)
        .with("dataset_spec_hash", dataset_hash)
        .with("best_epoch", outcome.best_epoch);
    fs::write(out.join(HISTORY_FILE), reports::history_tsv(&p, &outcome.final_model.history))?;
    Ok(outcome)
}

/// Load a checkpoint, optionally requiring a specific architecture.
pub fn load_model(path: &Path, expected: Option<&Scenario>) -> Result<Model<f32>> {
    let ck = checkpoint::load(path)?;
    if let Some(s) = expected {
        if ck.model.architecture() != &s.architecture() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint architecture {} differs from the scenario's {}",
                checkpoint::architecture_descriptor(ck.model.architecture()),
                checkpoint::architecture_descriptor(&s.architecture())
            )));
        }
    }
    Ok(ck.model)
}

/// Frames to evaluate a checkpoint against.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSource {
    /// One partition of a stored dataset.
    Dataset { dir: std::path::PathBuf, partition: Partition },
    /// Fresh frames through the scenario's impairments at a fixed SNR.
    Snr(f64),
    /// Fresh frames through the RIS channel of `user` with configuration `config`.
    Channel { user: User, config: RisConfiguration },
}

/// Clean frames for final reporting.
pub fn report_frames(scenario: &Scenario) -> Result<Vec<LabeledFrame>> {
    evaluation_frames(
        scenario.optimizer.report_frames_per_class,
        &scenario.shaping(),
        scenario.derived_seed(stream::REPORT_FRAMES),
    )
}

/// Report frames impaired by the scenario profile at `snr_db`.
pub fn frames_at_snr(scenario: &Scenario, snr_db: f64) -> Result<Vec<LabeledFrame>> {
    let profile = ImpairmentProfile {
        snr_db,
        ..scenario.profile()
    };
    let noise = scenario.derived_seed(stream::TEST_FRAMES);
    report_frames(scenario)?
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise, &[i as u64]));
            impair(f, &profile, &mut rng)
        })
        .collect()
}

/// Geometry with noise floors resolved, calibrating if the scenario asks.
pub fn resolve_geometry(model: &Model<f32>, scenario: &Scenario) -> Result<(SceneGeometry, Option<Calibration>)> {
    match scenario.fixed_noise_floor() {
        Some(f) => Ok((scenario.geometry_with_floor(f), None)),
        None => {
            let c = calibrate(model, scenario)?;
            Ok((scenario.geometry_with_floor(c.noise_floor_dbm), Some(c)))
        }
    }
}

pub fn evaluate_source(model: &Model<f32>, scenario: &Scenario, source: &EvalSource) -> Result<ConfusionMatrix> {
    match source {
        EvalSource::Dataset { dir, partition } => {
            let (d, _) = read_dataset(dir)?;
            let frames: Vec<LabeledFrame> = d.frames(*partition);
            evaluate(model, &frames)
        }
        EvalSource::Snr(snr) => evaluate(model, &frames_at_snr(scenario, *snr)?),
        EvalSource::Channel { user, config } => {
            let (geometry, _) = resolve_geometry(model, scenario)?;
            let obj = report_objective(model, scenario, geometry, Target::User(*user))?;
            obj.confusion(*user, config)
        }
    }
}

fn source_label(source: &EvalSource) -> String {
    match source {
        EvalSource::Dataset { partition, .. } => format!("dataset-{}", partition.name()),
        EvalSource::Snr(s) => format!("snr{s}dB"),
        EvalSource::Channel { user, .. } => format!("channel-{user}"),
    }
}

/// Evaluate and write `confusion_<label>_counts.tsv` and `_percent.tsv`.
pub fn run_evaluate(model: &Model<f32>, scenario: &Scenario, source: &EvalSource, out: &Path) -> Result<ConfusionMatrix> {
    let cm = evaluate_source(model, scenario, source)?;
    let label = source_label(source);
    let mut p = provenance(scenario).with("source", &label);
    if let EvalSource::Channel { config, .. } = source {
        p = p.with("config", config);
    }
    write_confusion(out, &label, &p, &cm)?;
    Ok(cm)
}

fn write_confusion(out: &Path, label: &str, p: &Provenance, cm: &ConfusionMatrix) -> Result<()> {
    fs::create_dir_all(out)?;
    let (counts, pct) = reports::confusion_tsv(p, cm);
    fs::write(out.join(format!("confusion_{label}_counts.tsv")), counts)?;
    fs::write(out.join(format!("confusion_{label}_percent.tsv")), pct)?;
    Ok(())
}

/// Noise floors that put each user's mean random-configuration SNR
/// `margin_db` below the highest SNR at which the model is still at chance.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// `(snr_db, accuracy)` on the optimizer's frame set.
    pub curve: Vec<(f64, f64)>,
    pub chance_edge_db: f64,
    pub start_snr_db: f64,
    pub noise_floor_dbm: [f64; 2],
}

pub fn calibrate(model: &Model<f32>, scenario: &Scenario) -> Result<Calibration> {
    let c = &scenario.calibration;
    let geometry = scenario.geometry_with_floor([0.0; 2]);
    let obj = search_objective(model, scenario, geometry.clone(), Target::User(User::User1))?;
    let mut curve = Vec::new();
    let steps = ((c.grid_max_db - c.grid_min_db) / c.grid_step_db).floor() as usize;
    for i in 0..=steps {
        let snr = c.grid_min_db + i as f64 * c.grid_step_db;
        curve.push((snr, obj.accuracy_at_snr(User::User1, snr)?));
    }
    let edge = curve
        .iter()
        .take_while(|(_, a)| *a <= c.chance_accuracy)
        .last()
        .map(|(s, _)| *s)
        .ok_or_else(|| {
            Error::Config(format!(
                "model accuracy exceeds {} already at {} dB; lower calibration.grid_min_db",
                c.chance_accuracy, c.grid_min_db
            ))
        })?;
    let start = edge - c.margin_db;
    let mut floor = [0.0; 2];
    for u in User::BOTH {
        floor[u.index()] = calibrate_noise_floor(&geometry, u, start)?;
    }
    Ok(Calibration {
        curve,
        chance_edge_db: edge,
        start_snr_db: start,
        noise_floor_dbm: floor,
    })
}

fn search_objective<'a>(
    model: &'a Model<f32>,
    scenario: &Scenario,
    geometry: SceneGeometry,
    target: Target,
) -> Result<AccuracyObjective<'a>> {
    let frames = evaluation_frames(
        scenario.optimizer.frames_per_class,
        &scenario.shaping(),
        scenario.derived_seed(stream::EVAL_FRAMES),
    )?;
    let obj = AccuracyObjective::new(
        model,
        geometry,
        scenario.profile(),
        frames,
        scenario.derived_seed(stream::EVAL_NOISE),
        target,
    )?;
    Ok(if scenario.optimizer.redraw_noise {
        obj.with_redrawn_noise()
    } else {
        obj
    })
}

fn report_objective<'a>(
    model: &'a Model<f32>,
    scenario: &Scenario,
    geometry: SceneGeometry,
    target: Target,
) -> Result<AccuracyObjective<'a>> {
    AccuracyObjective::new(
        model,
        geometry,
        scenario.profile(),
        report_frames(scenario)?,
        scenario.derived_seed(stream::REPORT_NOISE),
        target,
    )
}

/// One optimization run and the final per-user accuracy of its best
/// configuration on the reporting frame set.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeRun {
    pub target: Target,
    pub result: OptimizationResult,
    pub report: Vec<(User, ConfusionMatrix)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSummary {
    pub geometry: SceneGeometry,
    pub calibration: Option<Calibration>,
    pub runs: Vec<OptimizeRun>,
    /// Per-user accuracy over the configurations visited by joint runs and
    /// the best configuration of every run.
    pub pairs: Option<SweepTable>,
}

fn run_strategy(scenario: &Scenario, obj: &CachedObjective, target_index: usize) -> Result<OptimizationResult> {
    let o = &scenario.optimizer;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scenario.derived_seed(stream::SEARCH), &[target_index as u64]));
    match o.strategy.as_str() {
        "random" => random_search(obj, o.random_samples, &mut rng),
        "exhaustive" => exhaustive(obj, &RisConfiguration::zeros(obj.bits()), &o.exhaustive_bits),
        _ => {
            let init = RisConfiguration::random(obj.bits(), &mut rng);
            let opts = GreedyOptions {
                max_sweeps: o.max_sweeps,
                starts: o.starts,
                max_evaluations: Some(o.max_evaluations),
                tolerance: o.accuracy_tolerance,
            };
            greedy_restarts(obj, &init, opts, &mut rng)
        }
    }
}

/// Run the configured strategy for every target.
pub fn optimize(
    model: &Model<f32>,
    scenario: &Scenario,
    mut on_run: impl FnMut(&OptimizeRun),
) -> Result<OptimizeSummary> {
    let targets = scenario.targets()?;
    if scenario.optimizer.objective == "gain" {
        let geometry = scenario.geometry_with_floor(scenario.fixed_noise_floor().unwrap_or([0.0; 2]));
        let mut runs = Vec::new();
        for (i, t) in targets.iter().enumerate() {
            let Target::User(u) = *t else {
                return Err(Error::Config("the gain objective supports user targets only".into()));
            };
            let obj = GainObjective::for_user(&geometry, u)?;
            let cached = CachedObjective::new(&obj);
            let run = OptimizeRun {
                target: *t,
                result: run_strategy(scenario, &cached, i)?,
                report: Vec::new(),
            };
            on_run(&run);
            runs.push(run);
        }
        return Ok(OptimizeSummary {
            geometry,
            calibration: None,
            runs,
            pairs: None,
        });
    }

    let (geometry, calibration) = resolve_geometry(model, scenario)?;
    let per_user = [
        search_objective(model, scenario, geometry.clone(), Target::User(User::User1))?,
        search_objective(model, scenario, geometry.clone(), Target::User(User::User2))?,
    ];
    let cached = [CachedObjective::new(&per_user[0]), CachedObjective::new(&per_user[1])];
    let reporter = report_objective(model, scenario, geometry.clone(), Target::JointMin)?;
    let mut runs = Vec::new();
    let mut pair_configs = Vec::new();
    for (i, &t) in targets.iter().enumerate() {
        let result = match t {
            Target::User(u) => run_strategy(scenario, &cached[u.index()], i)?,
            _ => {
                let joint = JointObjective::new(&cached[0], &cached[1], t)?;
                let r = run_strategy(scenario, &CachedObjective::new(&joint), i)?;
                pair_configs.extend(visited_configs(&r.trace));
                r
            }
        };
        pair_configs.push(result.best_config.clone());
        let report = User::BOTH
            .iter()
            .map(|&u| Ok((u, reporter.confusion(u, &result.best_config)?)))
            .collect::<Result<_>>()?;
        let run = OptimizeRun { target: t, result, report };
        on_run(&run);
        runs.push(run);
    }
    let mut seen = std::collections::HashSet::new();
    pair_configs.retain(|c| seen.insert(c.clone()));
    let pairs = multi_user_sweep(&cached[0], &cached[1], &pair_configs, scenario.optimizer.threshold)?;
    Ok(OptimizeSummary {
        geometry,
        calibration,
        runs,
        pairs: Some(pairs),
    })
}

/// [`optimize`] plus report files: `trace_<target>.tsv`, `best_<target>.txt`,
/// per-user confusion matrices of every best configuration, `pairs.tsv`
/// and, when calibrated, `calibration.tsv`.
pub fn run_optimize(
    model: &Model<f32>,
    scenario: &Scenario,
    out: &Path,
    on_run: impl FnMut(&OptimizeRun),
) -> Result<OptimizeSummary> {
    let summary = optimize(model, scenario, on_run)?;
    fs::create_dir_all(out)?;
    let mut p = provenance(scenario)
        .with("strategy", &scenario.optimizer.strategy)
        .with("objective", &scenario.optimizer.objective)
        .with("noise_floor_dbm", format!("{:?}", summary.geometry.noise_floor_dbm));
    if let Some(c) = &summary.calibration {
        p = p
            .with("chance_edge_db", c.chance_edge_db)
            .with("start_snr_db", c.start_snr_db);
        fs::write(out.join("calibration.tsv"), reports::calibration_tsv(&p, &c.curve))?;
    }
    for run in &summary.runs {
        let name = run.target.name();
        let tp = p.clone().with("target", name);
        fs::write(out.join(format!("trace_{name}.tsv")), reports::trace_tsv(&tp, &run.result))?;
        fs::write(out.join(format!("best_{name}.txt")), format!("{}\n", run.result.best_config))?;
        for (u, cm) in &run.report {
            let cp = tp.clone().with("user", u).with("config", &run.result.best_config);
            write_confusion(out, &format!("{name}_best_{u}"), &cp, cm)?;
        }
    }
    if let Some(pairs) = &summary.pairs {
        fs::write(out.join("pairs.tsv"), reports::pairs_tsv(&p, pairs))?;
    }
    Ok(summary)
}

/// Spectrogram of record `index` of a stored dataset, written to `out`.
pub fn run_spectrogram(dataset_dir: &Path, index: usize, out: &Path, window: usize, hop: usize) -> Result<()> {
    let (d, hash) = read_dataset(dataset_dir)?;
    let r = d.records.get(index).ok_or(Error::IndexOutOfRange {
        index,
        len: d.records.len(),
    })?;
    let sg = spectrogram(&r.frame.samples, window, hop)?;
    let p = Provenance::new(d.spec.master_seed, hash)
        .with("record", index)
        .with("label", r.frame.label);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, reports::spectrogram_tsv(&p, &sg, SAMPLE_RATE_HZ))?;
    Ok(())
}
