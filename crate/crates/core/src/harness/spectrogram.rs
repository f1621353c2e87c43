//! Short-time DFT magnitudes of a complex frame.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Time × frequency magnitude grid, peak normalized to 1. Frequency bins
/// run from `-fs/2` to just below `fs/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub window: usize,
    pub hop: usize,
    /// `rows()` rows of `window` magnitudes each.
    pub values: Vec<f64>,
}

impl Spectrogram {
    pub fn rows(&self) -> usize {
        self.values.len() / self.window
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.window..(t + 1) * self.window]
    }

    /// Centre frequency of bin `k` for sample rate `fs`.
    pub fn bin_frequency(&self, k: usize, fs: f64) -> f64 {
        (k as f64 - (self.window / 2) as f64) * fs / self.window as f64
    }
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

pub fn spectrogram(samples: &[Complex64], window: usize, hop: usize) -> Result<Spectrogram> {
    if window == 0 || hop == 0 {
        return Err(Error::Config("window and hop must be positive".into()));
    }
    if samples.len() < window {
        return Err(Error::Format(format!("{} samples is shorter than the {window}-sample window", samples.len())));
    }
    let rows = (samples.len() - window) / hop + 1;
    let w = hann(window);
    let fft = FftPlanner::new().plan_fft_forward(window);
    let mut values = Vec::with_capacity(rows * window);
    let mut buf = vec![Complex64::new(0.0, 0.0); window];
    for t in 0..rows {
        for (b, (x, wi)) in buf.iter_mut().zip(samples[t * hop..].iter().zip(&w)) {
            *b = x * wi;
        }
        fft.process(&mut buf);
        // shift so negative frequencies come first
        values.extend((0..window).map(|k| buf[(k + window - window / 2) % window].norm()));
    }
    let peak = values.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(Spectrogram { window, hop, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_dimensions() {
        let x = vec![Complex64::new(1.0, 0.0); 2048];
        let s = spectrogram(&x, 128, 64).unwrap();
        assert_eq!(s.rows(), (2048 - 128) / 64 + 1);
        assert_eq!(s.values.len(), 31 * 128);
    }

    #[test]
    fn tone_at_fs_over_8_peaks_in_one_bin() {
        let x: Vec<Complex64> = (0..2048).map(|n| Complex64::from_polar(1.0, 2.0 * PI * n as f64 / 8.0)).collect();
        let s = spectrogram(&x, 128, 64).unwrap();
        for t in 0..s.rows() {
            let row = s.row(t);
            let k = (0..128).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(k, 64 + 16);
            assert!((s.bin_frequency(k, 200e3) - 25e3).abs() < 1e-9);
        }
        assert!((s.values.iter().copied().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_input_is_an_error() {
        assert!(spectrogram(&[Complex64::new(0.0, 0.0); 10], 128, 64).is_err());
    }
}
