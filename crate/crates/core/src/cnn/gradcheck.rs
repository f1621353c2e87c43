//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnn::model::cross_entropy;
use crate::cnn::model::Trace;
use crate::cnn::{Model, Tensor};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Entries checked per parameter tensor; `None` checks all of them.
    pub samples_per_group: Option<usize>,
    pub seed: u64,
    /// Denominator floor for the relative error of near-zero gradients.
    pub abs_floor: f64,
    /// Minimum distance of every ReLU / max-pool decision from its kink.
    pub min_kink_margin: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            samples_per_group: Some(24),
            seed: 0,
            abs_floor: 1e-8,
            min_kink_margin: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupError {
    pub name: String,
    pub checked: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub groups: Vec<GroupError>,
    pub kink_margin: f64,
    /// Finite-difference step actually used.
    pub step: f64,
    /// Analytic gradients at the checked point.
    pub analytic: Vec<Tensor<f64>>,
}

/// Compare backpropagated gradients of the training-mode cross-entropy with
/// central differences `(L(p+h) - L(p-h)) / 2h`.
///
/// If the batch sits within `min_kink_margin` of a ReLU or pooling kink the
/// input is jittered slightly (seeded) and the check retried. The step is
/// capped at the measured kink margin and shrunk further for any entry whose
/// perturbed passes change a pooling or ReLU decision.
pub fn gradient_check(
    model: &Model<f64>,
    batch: &Tensor<f64>,
    labels: &[usize],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut batch = batch.clone();
    let mut trace = model.forward_train(&batch)?;
    let mut margin = trace.kink_margin(model);
    for _ in 0..8 {
        if margin >= opts.min_kink_margin {
            break;
        }
        for v in batch.values_mut() {
            *v += 1e-3 * rng.gen_range(-1.0..1.0);
        }
        trace = model.forward_train(&batch)?;
        margin = trace.kink_margin(model);
    }
    // a step wider than the kink margin would let the difference straddle a kink
    let step = opts.step.min(margin).max(1e-7);
    let mut analytic = model.zero_grads();
    model.backward(&trace, labels, &mut analytic);

    let pattern = trace.kink_pattern();
    let classes = model.architecture().classes;
    let mut probe = model.clone();
    let mut groups = Vec::new();
    for (pi, grad) in analytic.iter().enumerate() {
        let n = grad.len();
        let idx: Vec<usize> = match opts.samples_per_group {
            Some(s) if s < n => (0..s).map(|_| rng.gen_range(0..n)).collect(),
            _ => (0..n).collect(),
        };
        let mut worst = 0.0f64;
        for &i in &idx {
            let orig = probe.params()[pi].value.values()[i];
            let mut h = step;
            let numeric = loop {
                probe.params_mut()[pi].value.values_mut()[i] = orig + h;
                let up = probe.forward_train(&batch)?;
                probe.params_mut()[pi].value.values_mut()[i] = orig - h;
                let down = probe.forward_train(&batch)?;
                probe.params_mut()[pi].value.values_mut()[i] = orig;
                // a difference that straddles a kink measures the jump, not the slope
                let smooth = up.kink_pattern() == pattern && down.kink_pattern() == pattern;
                if smooth || h < 1e-9 {
                    let loss = |t: &Trace<f64>| cross_entropy(&t.logits, labels, classes);
                    break (loss(&up) - loss(&down)) / (2.0 * h);
                }
                h /= 4.0;
            };
            let a = grad.values()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
            worst = worst.max(rel);
        }
        groups.push(GroupError {
            name: model.params()[pi].name.clone(),
            checked: idx.len(),
            max_relative_error: worst,
        });
    }
    Ok(GradCheckReport {
        max_relative_error: groups.iter().map(|g| g.max_relative_error).fold(0.0, f64::max),
        groups,
        kink_margin: margin,
        step,
        analytic,
    })
}
