//! Inference helpers: frame batching, prediction and confusion matrices.

use num_complex::Complex64;

use crate::cnn::model::softmax_rows;
use crate::cnn::train::argmax;
use crate::cnn::{Mode, Model, Real, Tensor};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::sigsynth::{rms, LabeledFrame, ModulationScheme};

/// Stack frames into a `[b, 2, len]` tensor (I then Q), each scaled to unit RMS.
pub fn frames_to_batch<'a, T: Real>(frames: impl IntoIterator<Item = &'a [Complex64]>) -> Result<Tensor<T>> {
    let mut values = Vec::new();
    let mut n = 0;
    let mut len = None;
    for f in frames {
        if *len.get_or_insert(f.len()) != f.len() {
            return Err(Error::ShapeMismatch("frames of different lengths in one batch".into()));
        }
        let r = rms(f);
        let s = if r > 0.0 && r.is_finite() { 1.0 / r } else { 1.0 };
        values.extend(f.iter().map(|z| T::of(z.re * s)));
        values.extend(f.iter().map(|z| T::of(z.im * s)));
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptySet);
    }
    Tensor::from_vec(&[n, 2, len.unwrap_or(0)], values)
}

pub(crate) fn predict_logits<'a, T: Real>(
    model: &Model<T>,
    frames: impl IntoIterator<Item = &'a [Complex64]>,
) -> Result<Vec<T>> {
    let batch = frames_to_batch(frames)?;
    let probs = model.forward(&batch, Mode::Infer)?;
    // log-probabilities serve as logits for loss and argmax purposes
    Ok(probs.values().iter().map(|p| p.max(T::min_positive_value()).ln()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: ModulationScheme,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    /// Argmax with ties resolved to the lowest class index.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        let class = ModulationScheme::from_index(argmax(&probabilities))
            .ok_or_else(|| Error::ShapeMismatch("class index outside the modulation set".into()))?;
        Ok(Self { class, probabilities })
    }
}

fn check_classes<T: Real>(model: &Model<T>) -> Result<()> {
    let c = model.architecture().classes;
    if c != ModulationScheme::ALL.len() {
        return Err(Error::ShapeMismatch(format!("model has {c} classes, expected 5")));
    }
    Ok(())
}

pub fn predict<T: Real>(model: &Model<T>, frame: &LabeledFrame) -> Result<Prediction> {
    Ok(predict_batch(model, &[frame.samples.as_slice()])?.remove(0))
}

/// Predict many frames, internally chunked to bound memory.
pub fn predict_batch<T: Real>(model: &Model<T>, frames: &[&[Complex64]]) -> Result<Vec<Prediction>> {
    check_classes(model)?;
    if frames.is_empty() {
        return Err(Error::EmptySet);
    }
    let classes = model.architecture().classes;
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(64) {
        let batch = frames_to_batch(chunk.iter().copied())?;
        let probs = model.forward(&batch, Mode::Infer)?;
        for row in probs.values().chunks_exact(classes) {
            out.push(Prediction::from_probabilities(row.iter().map(|p| p.as_f64()).collect())?);
        }
    }
    Ok(out)
}

/// Confusion matrix of `model` over labelled frames.
pub fn evaluate<T: Real>(model: &Model<T>, frames: &[LabeledFrame]) -> Result<ConfusionMatrix> {
    if frames.is_empty() {
        return Err(Error::EmptySet);
    }
    let refs: Vec<&[Complex64]> = frames.iter().map(|f| f.samples.as_slice()).collect();
    let preds = predict_batch(model, &refs)?;
    let mut cm = ConfusionMatrix::default();
    for (f, p) in frames.iter().zip(&preds) {
        cm.record(f.label, p.class);
    }
    Ok(cm)
}

/// Softmax of raw scores; exposed for tests of the tie rule.
pub fn probabilities_from_scores(scores: &[f64]) -> Vec<f64> {
    softmax_rows(scores, scores.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_tie_resolves_to_class_zero() {
        let p = Prediction::from_probabilities(vec![0.2; 5]).unwrap();
        assert_eq!(p.class, ModulationScheme::Bpsk);
        let p = Prediction::from_probabilities(vec![0.1, 0.3, 0.3, 0.2, 0.1]).unwrap();
        assert_eq!(p.class, ModulationScheme::Qpsk);
    }

    #[test]
    fn batch_normalizes_rms() {
        let f = vec![Complex64::new(3.0, 4.0); 8];
        let t: Tensor<f64> = frames_to_batch([f.as_slice()]).unwrap();
        assert_eq!(t.shape(), &[1, 2, 8]);
        assert!((t.values()[0] - 0.6).abs() < 1e-15);
        assert!((t.values()[8] - 0.8).abs() < 1e-15);
    }
}
