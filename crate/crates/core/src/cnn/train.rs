//! Mini-batch SGD with momentum and a step learning-rate schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cnn::eval::{frames_to_batch, predict_logits};
use crate::cnn::model::{cross_entropy, EpochRecord, Gradients, Model};
use crate::cnn::{Real, Tensor};
use crate::error::{Error, Result};
use crate::sigsynth::LabeledFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub momentum: f64,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_drop_factor: f64,
    pub lr_drop_period_epochs: usize,
    pub max_epochs: usize,
    pub shuffle_seed: u64,
    /// Weight of the newest batch in the batchnorm running averages.
    pub bn_momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            batch_size: 256,
            initial_lr: 0.02,
            lr_drop_factor: 10.0,
            lr_drop_period_epochs: 9,
            max_epochs: 12,
            shuffle_seed: 0,
            bn_momentum: 0.1,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.lr_drop_period_epochs == 0 || !(self.lr_drop_factor >= 1.0) {
            return Err(Error::Config("invalid learning-rate schedule".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Learning rate for zero-based `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.initial_lr / self.lr_drop_factor.powi((epoch / self.lr_drop_period_epochs) as i32)
    }

    /// Full mini-batches per epoch (a trailing partial batch is dropped unless
    /// the whole set is smaller than one batch).
    pub fn iterations_per_epoch(&self, n_train: usize) -> usize {
        (n_train / self.batch_size).max(usize::from(n_train > 0))
    }
}

/// Momentum state, one velocity tensor per parameter.
pub struct Sgdm<T> {
    momentum: T,
    weight_decay: T,
    velocity: Gradients<T>,
}

impl<T: Real> Sgdm<T> {
    pub fn new(model: &Model<T>, momentum: f64) -> Self {
        Self {
            momentum: T::of(momentum),
            weight_decay: T::zero(),
            velocity: model.zero_grads(),
        }
    }

    /// L2 penalty `wd/2 * |w|^2` on conv and FC weights (not on batchnorm
    /// parameters or biases).
    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = T::of(wd);
        self
    }

    /// `v = momentum * v - lr * (g + wd * w); p += v`
    pub fn step(&mut self, model: &mut Model<T>, grads: &Gradients<T>, lr: f64) {
        let lr = T::of(lr);
        for ((p, v), g) in model.params_mut().iter_mut().zip(&mut self.velocity).zip(grads) {
            let wd = if p.name.ends_with("weight") { self.weight_decay } else { T::zero() };
            for ((w, vi), &gi) in p.value.values_mut().iter_mut().zip(v.values_mut()).zip(g.values()) {
                *vi = self.momentum * *vi - lr * (gi + wd * *w);
                *w += *vi;
            }
        }
    }
}

/// Result of one optimisation step on a batch.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
}

/// Forward, backward and SGDM update on one batch; updates batchnorm running
/// statistics.
pub fn train_step<T: Real>(
    model: &mut Model<T>,
    opt: &mut Sgdm<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    lr: f64,
    bn_momentum: f64,
) -> Result<StepStats> {
    let trace = model.forward_train(batch)?;
    let mut grads = model.zero_grads();
    let loss = model.backward(&trace, labels, &mut grads);
    let classes = model.architecture().classes;
    let correct = trace
        .logits
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { epoch: 0, batch: 0 });
    }
    let n = labels.len() * batch.shape()[2];
    let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
    let stats: Vec<(Vec<T>, Vec<T>)> = trace.batch_stats().map(|(m, v)| (m.to_vec(), v.to_vec())).collect();
    let m = T::of(bn_momentum);
    for (running, (mean, var)) in model.bn_stats_mut().iter_mut().zip(stats) {
        for (r, b) in running.mean.iter_mut().zip(&mean) {
            *r = (T::one() - m) * *r + m * *b;
        }
        for (r, b) in running.var.iter_mut().zip(&var) {
            *r = (T::one() - m) * *r + m * *b * T::of(unbias);
        }
    }
    opt.step(model, &grads, lr);
    Ok(StepStats { loss, correct })
}

pub(crate) fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Final and best-validation models from a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_model: Model<f32>,
    pub best_model: Model<f32>,
    pub best_epoch: usize,
}

/// Mean loss and accuracy of `frames` in inference mode.
pub fn loss_and_accuracy(model: &Model<f32>, frames: &[LabeledFrame]) -> Result<(f64, f64)> {
    if frames.is_empty() {
        return Err(Error::EmptySet);
    }
    let classes = model.architecture().classes;
    let mut loss = 0.0;
    let mut correct = 0;
    for chunk in frames.chunks(64) {
        let logits = predict_logits(model, chunk.iter().map(|f| f.samples.as_slice()))?;
        let labels: Vec<usize> = chunk.iter().map(|f| f.label.index()).collect();
        loss += cross_entropy(&logits, &labels, classes) * chunk.len() as f64;
        correct += logits
            .chunks_exact(classes)
            .zip(&labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
    }
    Ok((loss / frames.len() as f64, correct as f64 / frames.len() as f64))
}

/// Train for `cfg.max_epochs`, calling `on_epoch` after each epoch.
pub fn train_with_progress(
    mut model: Model<f32>,
    train: &[LabeledFrame],
    val: &[LabeledFrame],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptySet);
    }
    let classes = model.architecture().classes;
    if let Some(f) = train.iter().chain(val).find(|f| f.label.index() >= classes) {
        return Err(Error::ShapeMismatch(format!("label {} outside model classes", f.label)));
    }
    let mut opt = Sgdm::new(&model, cfg.momentum).with_weight_decay(cfg.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let iters = cfg.iterations_per_epoch(train.len());
    let bs = cfg.batch_size.min(train.len());
    let start_epoch = model.history.len();
    let mut best: Option<(f64, usize, Model<f32>)> = None;

    for epoch in 0..cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate(epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for it in 0..iters {
            let idx = &order[it * bs..(it + 1) * bs];
            let batch = frames_to_batch(idx.iter().map(|&i| train[i].samples.as_slice()))?;
            let labels: Vec<usize> = idx.iter().map(|&i| train[i].label.index()).collect();
            let stats = train_step(&mut model, &mut opt, &batch, &labels, lr, cfg.bn_momentum).map_err(|e| match e {
                Error::NonFiniteLoss { .. } | Error::NonFiniteActivation(_) => Error::NonFiniteLoss {
                    epoch: start_epoch + epoch,
                    batch: it,
                },
                other => other,
            })?;
            loss_sum += stats.loss;
            correct += stats.correct;
        }
        let (val_loss, val_acc) = loss_and_accuracy(&model, val)?;
        let rec = EpochRecord {
            epoch: start_epoch + epoch + 1,
            iterations: iters,
            learning_rate: lr,
            train_loss: loss_sum / iters as f64,
            train_accuracy: correct as f64 / (iters * bs) as f64,
            val_loss,
            val_accuracy: val_acc,
        };
        model.history.push(rec.clone());
        on_epoch(&rec);
        if best.as_ref().map_or(true, |(a, _, _)| val_acc > *a) {
            best = Some((val_acc, rec.epoch, model.clone()));
        }
    }
    let (_, best_epoch, mut best_model) = best.expect("at least one epoch");
    best_model.history = model.history.clone();
    Ok(TrainOutcome {
        final_model: model,
        best_model,
        best_epoch,
    })
}

pub fn train(model: Model<f32>, train: &[LabeledFrame], val: &[LabeledFrame], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(model, train, val, cfg, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_drops_every_period() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate(0), 0.02);
        assert_eq!(cfg.learning_rate(8), 0.02);
        assert!((cfg.learning_rate(9) - 0.002).abs() < 1e-15);
        assert!((cfg.learning_rate(11) - 0.002).abs() < 1e-15);
    }

    #[test]
    fn seventy_eight_iterations_per_epoch() {
        assert_eq!(TrainConfig::default().iterations_per_epoch(20_000), 78);
        assert_eq!(TrainConfig::default().iterations_per_epoch(100), 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { initial_lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
