//! Tab-separated report files. Each starts with `#` lines naming the report
//! kind and format version, the master seed and the scenario hash.

use std::fmt::Write;

use crate::cnn::EpochRecord;
use crate::harness::spectrogram::Spectrogram;
use crate::metrics::ConfusionMatrix;
use crate::optimizer::{OptimizationResult, SweepTable};
use crate::sigsynth::ModulationScheme;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub spec_hash: String,
    pub extra: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(seed: u64, spec_hash: impl Into<String>) -> Self {
        Self {
            seed,
            spec_hash: spec_hash.into(),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.into(), value.to_string()));
        self
    }

    pub fn header(&self, kind: &str) -> String {
        let mut s = format!(
            "# ris-amc {kind} v{REPORT_VERSION}\n# seed = {}\n# spec_hash = {}\n",
            self.seed, self.spec_hash
        );
        for (k, v) in &self.extra {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6}"))
}

pub fn history_tsv(p: &Provenance, history: &[EpochRecord]) -> String {
    let mut s = p.header("history");
    s.push_str("epoch\titerations\tlearning_rate\ttrain_loss\ttrain_accuracy\tval_loss\tval_accuracy\n");
    for r in history {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.epoch, r.iterations, r.learning_rate, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
        );
    }
    s
}

/// Counts and row-normalized percentages; rows are ground truth.
pub fn confusion_tsv(p: &Provenance, cm: &ConfusionMatrix) -> (String, String) {
    let names: Vec<&str> = ModulationScheme::ALL.iter().map(|m| m.name()).collect();
    let head = format!("truth\\predicted\t{}\n", names.join("\t"));
    let mut counts = p.header("confusion-counts");
    let _ = writeln!(counts, "# accuracy = {:.6}", cm.accuracy());
    counts.push_str(&head);
    let mut pct = p.header("confusion-percent");
    let _ = writeln!(pct, "# accuracy = {:.6}", cm.accuracy());
    pct.push_str(&head);
    let rows = cm.row_percentages();
    for (i, name) in names.iter().enumerate() {
        let c: Vec<String> = cm.counts[i].iter().map(u64::to_string).collect();
        let r: Vec<String> = rows[i].iter().map(|v| format!("{v:.2}")).collect();
        let _ = writeln!(counts, "{name}\t{}", c.join("\t"));
        let _ = writeln!(pct, "{name}\t{}", r.join("\t"));
    }
    (counts, pct)
}

pub fn trace_tsv(p: &Provenance, r: &OptimizationResult) -> String {
    let mut s = p.header("trace");
    let _ = writeln!(s, "# evaluations = {}\n# best_value = {:.6}\n# best_config = {}", r.evaluations, r.best_value, r.best_config);
    s.push_str("iteration\tconfig\taccuracy_user1\taccuracy_user2\tsnr_user1_db\tsnr_user2_db\tvalue\tbest_so_far\n");
    for e in &r.trace {
        let v = &e.evaluation;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
            e.iteration,
            e.config,
            opt(v.accuracy[0]),
            opt(v.accuracy[1]),
            opt(v.snr_db[0]),
            opt(v.snr_db[1]),
            v.value,
            e.best_so_far
        );
    }
    s
}

pub fn pairs_tsv(p: &Provenance, t: &SweepTable) -> String {
    let mut s = p.header("pairs");
    let _ = writeln!(s, "# threshold = {}\n# both_above = {}", t.threshold, t.both_above().len());
    s.push_str("config\taccuracy_user1\taccuracy_user2\tboth_above\n");
    for r in &t.rows {
        let both = r.accuracy[0].min(r.accuracy[1]) > t.threshold;
        let _ = writeln!(s, "{}\t{:.6}\t{:.6}\t{}", r.config, r.accuracy[0], r.accuracy[1], u8::from(both));
    }
    s
}

pub fn calibration_tsv(p: &Provenance, curve: &[(f64, f64)]) -> String {
    let mut s = p.header("calibration");
    s.push_str("snr_db\taccuracy\n");
    for (snr, acc) in curve {
        let _ = writeln!(s, "{snr}\t{acc:.6}");
    }
    s
}

/// One line per time step, `window` magnitudes per line.
pub fn spectrogram_tsv(p: &Provenance, sg: &Spectrogram, fs: f64) -> String {
    let mut s = p.header("spectrogram");
    let _ = writeln!(s, "# window = {}\n# hop = {}\n# rows = {}", sg.window, sg.hop, sg.rows());
    let freqs: Vec<String> = (0..sg.window).map(|k| format!("{}", sg.bin_frequency(k, fs))).collect();
    let _ = writeln!(s, "t\\f_hz\t{}", freqs.join("\t"));
    for t in 0..sg.rows() {
        let row: Vec<String> = sg.row(t).iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(s, "{}\t{}", t * sg.hop, row.join("\t"));
    }
    s
}

/// Data lines of a report (header and comments dropped), split on tabs.
pub fn table_rows(text: &str) -> Vec<Vec<&str>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect()
}
