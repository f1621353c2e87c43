//! Channel and hardware impairments, and training-set assembly.
//!
//! The chain applied by [`impair`] is Rician fading, then clock offset
//! (carrier offset plus sample-rate offset), then AWGN, then unit-RMS
//! renormalization.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sigsynth::{rms, synthesize_frame, LabeledFrame, ModulationScheme, ShapingConfig, SAMPLE_RATE_HZ};

/// Sinusoids in the diffuse fading component.
pub const FADING_SINUSOIDS: usize = 48;
/// K-factors at or above this are treated as a pure line-of-sight gain.
pub const PURE_LOS_K: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpairmentProfile {
    /// `f64::INFINITY` disables noise; `-inf` yields pure noise.
    pub snr_db: f64,
    /// Linear K-factor; `f64::INFINITY` disables fading.
    pub rician_k: f64,
    pub max_doppler_hz: f64,
    pub clock_offset_ppm: f64,
    pub carrier_freq_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for ImpairmentProfile {
    fn default() -> Self {
        Self {
            snr_db: 10.0,
            rician_k: 4.0,
            max_doppler_hz: 10.0,
            clock_offset_ppm: 5.0,
            carrier_freq_hz: 5e9,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }
}

impl ImpairmentProfile {
    /// Profile that leaves frames untouched.
    pub fn identity() -> Self {
        Self {
            snr_db: f64::INFINITY,
            rician_k: f64::INFINITY,
            max_doppler_hz: 0.0,
            clock_offset_ppm: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProfile(m));
        if self.snr_db.is_nan() {
            return bad("snr_db is NaN".into());
        }
        if !(self.rician_k >= 0.0) {
            return bad(format!("rician_k {} must be >= 0", self.rician_k));
        }
        if !(self.max_doppler_hz >= 0.0 && self.max_doppler_hz.is_finite()) {
            return bad(format!("max_doppler_hz {} must be finite and >= 0", self.max_doppler_hz));
        }
        if !(self.sample_rate_hz > 2.0 * self.max_doppler_hz) {
            return bad("sample rate must exceed twice the maximum Doppler shift".into());
        }
        if !(self.clock_offset_ppm.abs() < 100.0) {
            return bad(format!("clock offset {} ppm outside (-100, 100)", self.clock_offset_ppm));
        }
        if !(self.carrier_freq_hz > 0.0 && self.carrier_freq_hz.is_finite()) {
            return bad("carrier frequency must be positive".into());
        }
        Ok(())
    }
}

/// Adds circularly-symmetric Gaussian noise at `snr_db` relative to the
/// measured frame power. `+inf` leaves the frame unchanged; `-inf` replaces
/// it with unit-power noise.
pub fn apply_awgn(mut frame: LabeledFrame, snr_db: f64, rng: &mut impl Rng) -> LabeledFrame {
    if snr_db == f64::INFINITY {
        return frame;
    }
    let power = if snr_db == f64::NEG_INFINITY {
        frame.samples.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        1.0
    } else {
        let p = frame.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / frame.samples.len() as f64;
        p / 10f64.powf(snr_db / 10.0)
    };
    let sigma = (power / 2.0).sqrt();
    for z in frame.samples.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex64::new(re, im) * sigma;
    }
    frame
}

/// Carrier offset `ppm·1e-6·fc` plus a `(1 + ppm·1e-6)` sampling-clock error.
///
/// The output sample `n` is the input interpolated (linearly) at time
/// `n·(1 + ppm·1e-6)`, holding the last sample past the end, then rotated by
/// `exp(j2π·Δf·n/fs)`.
pub fn apply_clock_offset(mut frame: LabeledFrame, ppm: f64, fc: f64, fs: f64) -> Result<LabeledFrame> {
    if !(ppm.abs() < 100.0) {
        return Err(Error::InvalidProfile(format!("clock offset {ppm} ppm outside (-100, 100)")));
    }
    if ppm == 0.0 {
        return Ok(frame);
    }
    let ratio = 1.0 + ppm * 1e-6;
    let x = &frame.samples;
    let len = x.len();
    let resampled: Vec<Complex64> = (0..len)
        .map(|n| {
            let t = n as f64 * ratio;
            let i = t.floor() as usize;
            if i + 1 >= len {
                x[len - 1]
            } else {
                let a = t - i as f64;
                x[i] * (1.0 - a) + x[i + 1] * a
            }
        })
        .collect();
    let df = ppm * 1e-6 * fc;
    frame.samples = resampled
        .into_iter()
        .enumerate()
        .map(|(n, z)| z * Complex64::from_polar(1.0, 2.0 * PI * df * n as f64 / fs))
        .collect();
    Ok(frame)
}

/// Rician gain process `sqrt(K/(K+1))·e^{jθ} + sqrt(1/(K+1))·d(n)`, where the
/// diffuse part `d` is a normalized sum of [`FADING_SINUSOIDS`] sinusoids
/// with random arrival angles and phases.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    los: Complex64,
    diffuse_amp: f64,
    /// Per-sinusoid Doppler increment in radians per sample.
    omega: Vec<f64>,
    phase: Vec<f64>,
}

impl FadingProcess {
    pub fn new(k: f64, fd: f64, fs: f64, rng: &mut impl Rng) -> Self {
        if k == f64::INFINITY {
            return Self {
                los: Complex64::new(1.0, 0.0),
                diffuse_amp: 0.0,
                omega: Vec::new(),
                phase: Vec::new(),
            };
        }
        let theta = rng.gen_range(-PI..PI);
        if k >= PURE_LOS_K {
            return Self {
                los: Complex64::from_polar(1.0, theta),
                diffuse_amp: 0.0,
                omega: Vec::new(),
                phase: Vec::new(),
            };
        }
        let m = FADING_SINUSOIDS;
        let mut omega = Vec::with_capacity(m);
        let mut phase = Vec::with_capacity(m);
        for i in 0..m {
            let alpha = (2.0 * PI * i as f64 + rng.gen_range(-PI..PI)) / m as f64;
            omega.push(2.0 * PI * fd * alpha.cos() / fs);
            phase.push(rng.gen_range(-PI..PI));
        }
        Self {
            los: Complex64::from_polar((k / (k + 1.0)).sqrt(), theta),
            diffuse_amp: (1.0 / ((k + 1.0) * m as f64)).sqrt(),
            omega,
            phase,
        }
    }

    /// Gain at sample `n`.
    pub fn gain(&self, n: usize) -> Complex64 {
        let t = n as f64;
        let d: Complex64 = self
            .omega
            .iter()
            .zip(&self.phase)
            .map(|(w, p)| Complex64::from_polar(1.0, w * t + p))
            .sum();
        self.los + d * self.diffuse_amp
    }

    /// Gains for samples `0..len`.
    pub fn gains(&self, len: usize) -> Vec<Complex64> {
        if self.omega.is_empty() {
            return vec![self.los; len];
        }
        let mut osc: Vec<Complex64> = self.phase.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        let step: Vec<Complex64> = self.omega.iter().map(|&w| Complex64::from_polar(1.0, w)).collect();
        let mut out = Vec::with_capacity(len);
        for n in 0..len {
            // re-anchor periodically against accumulated rounding
            if n % 256 == 0 && n > 0 {
                for ((o, &w), &p) in osc.iter_mut().zip(&self.omega).zip(&self.phase) {
                    *o = Complex64::from_polar(1.0, w * n as f64 + p);
                }
            }
            let d: Complex64 = osc.iter().sum();
            out.push(self.los + d * self.diffuse_amp);
            for (o, s) in osc.iter_mut().zip(&step) {
                *o *= s;
            }
        }
        out
    }
}

pub fn apply_rician(mut frame: LabeledFrame, k: f64, fd: f64, fs: f64, rng: &mut impl Rng) -> LabeledFrame {
    let fading = FadingProcess::new(k, fd, fs, rng);
    let g = fading.gains(frame.samples.len());
    for (z, gi) in frame.samples.iter_mut().zip(g) {
        *z *= gi;
    }
    frame
}

/// Fading, clock offset, noise, then unit-RMS renormalization.
pub fn impair(frame: LabeledFrame, profile: &ImpairmentProfile, rng: &mut impl Rng) -> Result<LabeledFrame> {
    profile.validate()?;
    let frame = apply_rician(frame, profile.rician_k, profile.max_doppler_hz, profile.sample_rate_hz, rng);
    let frame = apply_clock_offset(frame, profile.clock_offset_ppm, profile.carrier_freq_hz, profile.sample_rate_hz)?;
    let frame = apply_awgn(frame, profile.snr_db, rng);
    let r = rms(&frame.samples);
    let mut frame = frame;
    if r > 0.0 && r.is_finite() && r != 1.0 {
        frame.samples.iter_mut().for_each(|z| *z /= r);
    }
    Ok(frame)
}

/// Deterministic seed derivation (SplitMix64 over the master seed and tags).
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(master), |acc, &t| mix(acc ^ mix(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown partition {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub frames_per_class: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub profile: ImpairmentProfile,
    pub shaping: ShapingConfig,
    pub master_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            frames_per_class: 5000,
            split: [0.8, 0.1, 0.1],
            profile: ImpairmentProfile::default(),
            shaping: ShapingConfig::default(),
            master_seed: 0,
        }
    }
}

impl DatasetSpec {
    /// Per-class frame counts of train, validation and test.
    pub fn split_counts(&self) -> Result<[usize; 3]> {
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions {:?} must be >= 0 and sum to 1", self.split)));
        }
        let mut out = [0usize; 3];
        for (o, f) in out.iter_mut().zip(self.split) {
            let c = f * self.frames_per_class as f64;
            if (c - c.round()).abs() > 1e-6 {
                return Err(Error::InvalidSplit(format!(
                    "{f} x {} frames is not an integer",
                    self.frames_per_class
                )));
            }
            *o = c.round() as usize;
        }
        if out.iter().sum::<usize>() != self.frames_per_class {
            return Err(Error::InvalidSplit("partition sizes do not add up".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.split_counts()?;
        self.profile.validate()?;
        self.shaping.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub frame: LabeledFrame,
    pub impairment_seed: u64,
    pub partition: Partition,
}

/// Impaired frames with their stratified partition assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &LabeledFrame> {
        self.records.iter().filter(move |r| r.partition == p).map(|r| &r.frame)
    }

    pub fn frames(&self, p: Partition) -> Vec<LabeledFrame> {
        self.partition(p).cloned().collect()
    }

    /// Frame count per class in partition `p`.
    pub fn class_counts(&self, p: Partition) -> [usize; 5] {
        let mut out = [0; 5];
        for f in self.partition(p) {
            out[f.label.index()] += 1;
        }
        out
    }
}

/// Seeds for frame `index` of `scheme`: (synthesis, impairment).
pub fn frame_seeds(master: u64, scheme: ModulationScheme, index: usize) -> (u64, u64) {
    (
        derive_seed(master, &[scheme.index() as u64, index as u64, 0]),
        derive_seed(master, &[scheme.index() as u64, index as u64, 1]),
    )
}

/// Round every sample to single precision, the storage precision of the
/// dataset container.
pub fn quantize_f32(mut frame: LabeledFrame) -> LabeledFrame {
    for z in frame.samples.iter_mut() {
        *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
    }
    frame
}

/// Synthesize and impair `frames_per_class` frames of every scheme; the first
/// train-fraction of each class goes to training, then validation, then test.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let [n_train, n_val, _] = spec.split_counts()?;
    let mut records = Vec::with_capacity(5 * spec.frames_per_class);
    for scheme in ModulationScheme::ALL {
        for i in 0..spec.frames_per_class {
            let (synth_seed, imp_seed) = frame_seeds(spec.master_seed, scheme, i);
            let clean = synthesize_frame(scheme, &spec.shaping, synth_seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(imp_seed);
            let frame = quantize_f32(impair(clean, &spec.profile, &mut rng)?);
            let partition = if i < n_train {
                Partition::Train
            } else if i < n_train + n_val {
                Partition::Val
            } else {
                Partition::Test
            };
            records.push(Record {
                frame,
                impairment_seed: imp_seed,
                partition,
            });
        }
    }
    Ok(Dataset {
        spec: spec.clone(),
        records,
    })
}
