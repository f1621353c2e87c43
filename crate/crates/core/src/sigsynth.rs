//! Clean complex-baseband frame synthesis for the five digital modulations.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Samples per frame.
pub const FRAME_LEN: usize = 2048;
/// Baseband sample rate in Hz.
pub const SAMPLE_RATE_HZ: f64 = 200e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModulationScheme {
    Bpsk,
    Qpsk,
    Psk8,
    Qam16,
    Qam64,
}

impl ModulationScheme {
    /// Class order used by every report and by the classifier output.
    pub const ALL: [ModulationScheme; 5] = [
        ModulationScheme::Bpsk,
        ModulationScheme::Qpsk,
        ModulationScheme::Psk8,
        ModulationScheme::Qam16,
        ModulationScheme::Qam64,
    ];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModulationScheme::Bpsk => 1,
            ModulationScheme::Qpsk => 2,
            ModulationScheme::Psk8 => 3,
            ModulationScheme::Qam16 => 4,
            ModulationScheme::Qam64 => 6,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationScheme::Bpsk => "BPSK",
            ModulationScheme::Qpsk => "QPSK",
            ModulationScheme::Psk8 => "8PSK",
            ModulationScheme::Qam16 => "16QAM",
            ModulationScheme::Qam64 => "64QAM",
        }
    }
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Format(format!("unknown modulation {s:?}")))
    }
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

/// Gray-labelled constellation with unit average symbol energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationMap {
    bits_per_symbol: usize,
    points: Vec<Complex64>,
    labels: Vec<usize>,
    by_label: Vec<usize>,
}

impl ConstellationMap {
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Bit label of each point, as an integer whose MSB is the first bit.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn label_string(&self, point: usize) -> String {
        format!("{:0width$b}", self.labels[point], width = self.bits_per_symbol)
    }

    pub fn point_for_label(&self, label: usize) -> Complex64 {
        self.points[self.by_label[label]]
    }

    /// Label of the point nearest to `z`.
    pub fn nearest_label(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        self.labels[best]
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

/// Gray-coded constellation for `scheme`.
///
/// PSK points sit at angle `π/M + 2πk/M` (BPSK at 0 and π) with label
/// `gray(k)`. Square QAM uses per-axis Gray labels on the odd-integer grid,
/// I sub-label in the high bits, scaled to unit mean energy.
pub fn gray_constellation(scheme: ModulationScheme) -> ConstellationMap {
    let k = scheme.bits_per_symbol();
    let m = scheme.order();
    let (points, labels): (Vec<Complex64>, Vec<usize>) = match scheme {
        ModulationScheme::Bpsk => (vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)], vec![0, 1]),
        ModulationScheme::Qpsk | ModulationScheme::Psk8 => (0..m)
            .map(|i| {
                let ang = PI / m as f64 + 2.0 * PI * i as f64 / m as f64;
                (Complex64::from_polar(1.0, ang), gray(i))
            })
            .unzip(),
        ModulationScheme::Qam16 | ModulationScheme::Qam64 => {
            let side = 1usize << (k / 2);
            let scale = (2.0 * (m as f64 - 1.0) / 3.0).sqrt().recip();
            let level = |i: usize| (2.0 * i as f64 - (side as f64 - 1.0)) * scale;
            (0..side)
                .flat_map(|ii| (0..side).map(move |qi| (ii, qi)))
                .map(|(ii, qi)| (Complex64::new(level(ii), level(qi)), (gray(ii) << (k / 2)) | gray(qi)))
                .unzip()
        }
    };
    let mut by_label = vec![0; m];
    for (i, &l) in labels.iter().enumerate() {
        by_label[l] = i;
    }
    ConstellationMap {
        bits_per_symbol: k,
        points,
        labels,
        by_label,
    }
}

/// Map bits (MSB first within each group) to constellation symbols.
pub fn modulate(bits: &[u8], scheme: ModulationScheme) -> Result<Vec<Complex64>> {
    let k = scheme.bits_per_symbol();
    if bits.len() % k != 0 {
        return Err(Error::IndivisibleBitCount {
            len: bits.len(),
            bits_per_symbol: k,
        });
    }
    let map = gray_constellation(scheme);
    Ok(bits
        .chunks_exact(k)
        .map(|g| {
            let label = g.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
            map.point_for_label(label)
        })
        .collect())
}

/// Nearest-point hard demapping back to bits.
pub fn demodulate(symbols: &[Complex64], scheme: ModulationScheme) -> Vec<u8> {
    let map = gray_constellation(scheme);
    let k = scheme.bits_per_symbol();
    let mut out = Vec::with_capacity(symbols.len() * k);
    for &s in symbols {
        let label = map.nearest_label(s);
        for j in (0..k).rev() {
            out.push(((label >> j) & 1) as u8);
        }
    }
    out
}

/// Root-raised-cosine pulse shaping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingConfig {
    pub samples_per_symbol: usize,
    pub rolloff: f64,
    pub filter_span_symbols: usize,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            samples_per_symbol: 8,
            rolloff: 0.35,
            filter_span_symbols: 8,
        }
    }
}

impl ShapingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_symbol < 2 {
            return Err(Error::InvalidShaping("samples_per_symbol must be >= 2".into()));
        }
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::InvalidShaping(format!("rolloff {} outside (0, 1]", self.rolloff)));
        }
        if self.filter_span_symbols == 0 || self.filter_span_symbols % 2 != 0 {
            return Err(Error::InvalidShaping("filter span must be a positive even number of symbols".into()));
        }
        if FRAME_LEN % self.samples_per_symbol != 0 {
            return Err(Error::InvalidShaping(format!(
                "frame length {FRAME_LEN} not divisible by {} samples per symbol",
                self.samples_per_symbol
            )));
        }
        Ok(())
    }

    pub fn symbol_rate(&self, sample_rate: f64) -> f64 {
        sample_rate / self.samples_per_symbol as f64
    }

    /// Root-raised-cosine taps, `span * sps + 1` long, unit energy.
    pub fn rrc_taps(&self) -> Vec<f64> {
        let sps = self.samples_per_symbol as f64;
        let beta = self.rolloff;
        let half = (self.filter_span_symbols * self.samples_per_symbol / 2) as isize;
        let mut taps: Vec<f64> = (-half..=half)
            .map(|n| {
                let t = n as f64 / sps;
                if n == 0 {
                    1.0 - beta + 4.0 * beta / PI
                } else if ((4.0 * beta * t).abs() - 1.0).abs() < 1e-12 {
                    beta / 2f64.sqrt()
                        * ((1.0 + 2.0 / PI) * (PI / (4.0 * beta)).sin()
                            + (1.0 - 2.0 / PI) * (PI / (4.0 * beta)).cos())
                } else {
                    ((PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos())
                        / (PI * t * (1.0 - (4.0 * beta * t).powi(2)))
                }
            })
            .collect();
        let norm = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
        taps.iter_mut().for_each(|h| *h /= norm);
        taps
    }
}

/// Upsample, filter with the RRC pulse and drop the filter delay so the output
/// holds exactly `symbols.len() * samples_per_symbol` samples.
pub fn pulse_shape(symbols: &[Complex64], cfg: &ShapingConfig) -> Result<Vec<Complex64>> {
    if symbols.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sps = cfg.samples_per_symbol;
    let taps = cfg.rrc_taps();
    let delay = taps.len() / 2;
    let out_len = symbols.len() * sps;
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    // out[i] = sum_s symbols[s] * taps[i + delay - s*sps]
    for (s, &sym) in symbols.iter().enumerate() {
        let center = s * sps;
        let lo = center.saturating_sub(delay);
        let hi = (center + delay + 1).min(out_len);
        for (i, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
            *o += sym * taps[i + delay - center];
        }
    }
    Ok(out)
}

pub fn rms(samples: &[Complex64]) -> f64 {
    (samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64).sqrt()
}

/// One labelled frame of complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub samples: Vec<Complex64>,
    pub label: ModulationScheme,
    pub seed: u64,
    /// RMS before normalization.
    pub rms: f64,
}

impl LabeledFrame {
    /// Scale to unit RMS, recording the prior RMS.
    pub fn normalized(mut self) -> Self {
        let r = rms(&self.samples);
        if r > 0.0 && r.is_finite() {
            self.samples.iter_mut().for_each(|z| *z /= r);
        }
        self.rms = r;
        self
    }
}

/// Random payload, modulated, pulse shaped and normalized to unit RMS.
pub fn synthesize_frame(scheme: ModulationScheme, shaping: &ShapingConfig, seed: u64) -> Result<LabeledFrame> {
    shaping.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sym = FRAME_LEN / shaping.samples_per_symbol;
    let bits: Vec<u8> = (0..n_sym * scheme.bits_per_symbol()).map(|_| rng.gen_range(0..=1u8)).collect();
    let symbols = modulate(&bits, scheme)?;
    let samples = pulse_shape(&symbols, shaping)?;
    Ok(LabeledFrame {
        samples,
        label: scheme,
        seed,
        rms: 0.0,
    }
    .normalized())
}
