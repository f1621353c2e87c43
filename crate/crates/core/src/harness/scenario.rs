//! Scenario files: TOML with one section per pipeline stage.
//!
//! ```toml
//! format = "ris-amc-scenario"
//! version = 1
//! seed = 0
//!
//! [geometry]
//! tx = [0.0, 110.0]          # azimuth, elevation in degrees
//! noise_floor_dbm = "auto"   # or [user1, user2]
//!
//! [impairments]
//! snr_db = 10.0
//! ```
//!
//! Every key is optional; missing keys take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cnn::{Architecture, Head, TrainConfig};
use crate::error::{Error, Result};
use crate::impairments::{derive_seed, DatasetSpec, ImpairmentProfile};
use crate::optimizer::Target;
use crate::ris::{Angles, RisLayout, SceneGeometry};
use crate::sigsynth::{ShapingConfig, SAMPLE_RATE_HZ};

pub const SCENARIO_FORMAT: &str = "ris-amc-scenario";
pub const SCENARIO_VERSION: u32 = 1;

/// Seed streams derived from the master seed.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const EVAL_FRAMES: u64 = 3;
    pub const EVAL_NOISE: u64 = 4;
    pub const SEARCH: u64 = 5;
    pub const REPORT_FRAMES: u64 = 6;
    pub const REPORT_NOISE: u64 = 7;
    pub const TEST_FRAMES: u64 = 8;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseFloor {
    /// Calibrated from the trained model; must be the string `"auto"`.
    Auto(String),
    Fixed([f64; 2]),
}

impl NoiseFloor {
    pub fn auto() -> Self {
        NoiseFloor::Auto("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub tx: [f64; 2],
    pub user1: [f64; 2],
    pub user2: [f64; 2],
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub tx_power_dbm: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: [f64; 2],
    pub noise_floor_dbm: NoiseFloor,
    pub carrier_freq_hz: f64,
    pub element_exponent: f64,
    pub ris_count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pitch_m: f64,
    pub ris_spacing_m: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = SceneGeometry::default();
        let a = |x: Angles| [x.azimuth_deg, x.elevation_deg];
        Self {
            tx: a(g.tx),
            user1: a(g.user1),
            user2: a(g.user2),
            d0: g.d0,
            d1: g.d1,
            d2: g.d2,
            tx_power_dbm: g.tx_power_dbm,
            tx_gain_db: g.tx_gain_db,
            rx_gain_db: g.rx_gain_db,
            noise_floor_dbm: NoiseFloor::auto(),
            carrier_freq_hz: g.carrier_freq_hz,
            element_exponent: g.element_exponent,
            ris_count: g.layout.ris_count,
            rows: g.layout.rows,
            cols: g.layout.cols,
            pitch_m: g.layout.pitch_m,
            ris_spacing_m: g.layout.ris_spacing_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpairmentSection {
    pub snr_db: f64,
    pub rician_k: f64,
    pub max_doppler_hz: f64,
    pub clock_offset_ppm: f64,
    pub carrier_freq_hz: f64,
    pub sample_rate_hz: f64,
    pub samples_per_symbol: usize,
    pub rolloff: f64,
    pub filter_span_symbols: usize,
}

impl Default for ImpairmentSection {
    fn default() -> Self {
        let p = ImpairmentProfile::default();
        let s = ShapingConfig::default();
        Self {
            snr_db: p.snr_db,
            rician_k: p.rician_k,
            max_doppler_hz: p.max_doppler_hz,
            clock_offset_ppm: p.clock_offset_ppm,
            carrier_freq_hz: p.carrier_freq_hz,
            sample_rate_hz: SAMPLE_RATE_HZ,
            samples_per_symbol: s.samples_per_symbol,
            rolloff: s.rolloff,
            filter_span_symbols: s.filter_span_symbols,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub frames_per_class: usize,
    pub split: [f64; 3],
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetSpec::default();
        Self {
            frames_per_class: d.frames_per_class,
            split: d.split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureSection {
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub head: HeadKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Flatten,
    #[default]
    GlobalAverage,
}

impl Default for ArchitectureSection {
    fn default() -> Self {
        Self {
            filters: vec![16, 32, 48, 64, 80, 96],
            kernel: 8,
            head: HeadKind::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub momentum: f64,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_drop_factor: f64,
    pub lr_drop_period_epochs: usize,
    pub max_epochs: usize,
    pub bn_momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            momentum: t.momentum,
            batch_size: t.batch_size,
            initial_lr: t.initial_lr,
            lr_drop_factor: t.lr_drop_factor,
            lr_drop_period_epochs: t.lr_drop_period_epochs,
            max_epochs: t.max_epochs,
            bn_momentum: t.bn_momentum,
            weight_decay: t.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    /// `greedy`, `random` or `exhaustive`.
    pub strategy: String,
    /// `accuracy` or `gain`.
    pub objective: String,
    pub targets: Vec<String>,
    pub max_sweeps: usize,
    pub starts: usize,
    pub max_evaluations: usize,
    pub random_samples: usize,
    /// Free pixels for the exhaustive strategy.
    pub exhaustive_bits: Vec<usize>,
    pub frames_per_class: usize,
    pub report_frames_per_class: usize,
    pub threshold: f64,
    pub redraw_noise: bool,
    /// Accuracy differences up to this are settled by received SNR.
    pub accuracy_tolerance: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            strategy: "greedy".into(),
            objective: "accuracy".into(),
            targets: vec!["user1".into(), "user2".into(), "joint-min".into()],
            max_sweeps: 6,
            starts: 1,
            max_evaluations: 2000,
            random_samples: 2000,
            exhaustive_bits: Vec::new(),
            frames_per_class: 50,
            report_frames_per_class: 100,
            threshold: 0.8,
            redraw_noise: false,
            accuracy_tolerance: 0.02,
        }
    }
}

/// Noise-floor calibration against the trained model's accuracy curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    /// Accuracy regarded as chance level.
    pub chance_accuracy: f64,
    /// Distance below the chance-level edge for the mean random-configuration SNR.
    pub margin_db: f64,
    pub grid_min_db: f64,
    pub grid_max_db: f64,
    pub grid_step_db: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            chance_accuracy: 0.25,
            margin_db: 5.0,
            grid_min_db: -40.0,
            grid_max_db: 20.0,
            grid_step_db: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub geometry: GeometrySection,
    pub impairments: ImpairmentSection,
    pub dataset: DatasetSection,
    pub architecture: ArchitectureSection,
    pub train: TrainSection,
    pub optimizer: OptimizerSection,
    pub calibration: CalibrationSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            format: SCENARIO_FORMAT.into(),
            version: SCENARIO_VERSION,
            seed: 0,
            geometry: GeometrySection::default(),
            impairments: ImpairmentSection::default(),
            dataset: DatasetSection::default(),
            architecture: ArchitectureSection::default(),
            train: TrainSection::default(),
            optimizer: OptimizerSection::default(),
            calibration: CalibrationSection::default(),
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if s.format != SCENARIO_FORMAT {
            return Err(Error::BadMagic {
                expected: SCENARIO_FORMAT.into(),
                found: s.format,
            });
        }
        if s.version != SCENARIO_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "scenario",
                expected: SCENARIO_VERSION,
                found: s.version,
            });
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form; parsing it gives back an equal scenario.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseFloor::Auto(s) = &self.geometry.noise_floor_dbm {
            if s != "auto" {
                return Err(Error::Config(format!("noise_floor_dbm must be \"auto\" or [user1, user2], got {s:?}")));
            }
        }
        self.geometry_with_floor([0.0; 2]).validate()?;
        self.dataset_spec().validate()?;
        self.architecture().validate()?;
        self.train_config().validate()?;
        let o = &self.optimizer;
        if !["greedy", "random", "exhaustive"].contains(&o.strategy.as_str()) {
            return Err(Error::Config(format!("unknown strategy {:?}", o.strategy)));
        }
        if !["accuracy", "gain"].contains(&o.objective.as_str()) {
            return Err(Error::Config(format!("unknown objective {:?}", o.objective)));
        }
        self.targets()?;
        if o.frames_per_class == 0 || o.report_frames_per_class == 0 {
            return Err(Error::Config("optimizer frame counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&o.accuracy_tolerance) {
            return Err(Error::Config("accuracy_tolerance must be in [0, 1]".into()));
        }
        let c = &self.calibration;
        if !(c.grid_step_db > 0.0) || !(c.grid_max_db > c.grid_min_db) {
            return Err(Error::Config("calibration grid is empty".into()));
        }
        Ok(())
    }

    pub fn derived_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, &[0x5EED, stream])
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Geometry with the given noise floors (used when calibrating).
    pub fn geometry_with_floor(&self, noise_floor_dbm: [f64; 2]) -> SceneGeometry {
        let g = &self.geometry;
        let a = |x: [f64; 2]| Angles::new(x[0], x[1]);
        SceneGeometry {
            tx: a(g.tx),
            user1: a(g.user1),
            user2: a(g.user2),
            d0: g.d0,
            d1: g.d1,
            d2: g.d2,
            tx_power_dbm: g.tx_power_dbm,
            tx_gain_db: g.tx_gain_db,
            rx_gain_db: g.rx_gain_db,
            noise_floor_dbm,
            carrier_freq_hz: g.carrier_freq_hz,
            layout: RisLayout {
                ris_count: g.ris_count,
                rows: g.rows,
                cols: g.cols,
                pitch_m: g.pitch_m,
                ris_spacing_m: g.ris_spacing_m,
            },
            element_exponent: g.element_exponent,
        }
    }

    /// Fixed noise floors, if the scenario gives them.
    pub fn fixed_noise_floor(&self) -> Option<[f64; 2]> {
        match self.geometry.noise_floor_dbm {
            NoiseFloor::Fixed(f) => Some(f),
            NoiseFloor::Auto(_) => None,
        }
    }

    pub fn profile(&self) -> ImpairmentProfile {
        let i = &self.impairments;
        ImpairmentProfile {
            snr_db: i.snr_db,
            rician_k: i.rician_k,
            max_doppler_hz: i.max_doppler_hz,
            clock_offset_ppm: i.clock_offset_ppm,
            carrier_freq_hz: i.carrier_freq_hz,
            sample_rate_hz: i.sample_rate_hz,
        }
    }

    pub fn shaping(&self) -> ShapingConfig {
        let i = &self.impairments;
        ShapingConfig {
            samples_per_symbol: i.samples_per_symbol,
            rolloff: i.rolloff,
            filter_span_symbols: i.filter_span_symbols,
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            frames_per_class: self.dataset.frames_per_class,
            split: self.dataset.split,
            profile: self.profile(),
            shaping: self.shaping(),
            master_seed: self.seed,
        }
    }

    pub fn architecture(&self) -> Architecture {
        let a = &self.architecture;
        Architecture {
            head: match a.head {
                HeadKind::Flatten => Head::Flatten,
                HeadKind::GlobalAverage => Head::GlobalAverage,
            },
            ..Architecture::with_filters(&a.filters, a.kernel)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            momentum: t.momentum,
            batch_size: t.batch_size,
            initial_lr: t.initial_lr,
            lr_drop_factor: t.lr_drop_factor,
            lr_drop_period_epochs: t.lr_drop_period_epochs,
            max_epochs: t.max_epochs,
            shuffle_seed: self.derived_seed(stream::SHUFFLE),
            bn_momentum: t.bn_momentum,
            weight_decay: t.weight_decay,
        }
    }

    pub fn targets(&self) -> Result<Vec<Target>> {
        self.optimizer.targets.iter().map(|t| Target::parse(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let s = Scenario::parse("").unwrap();
        assert_eq!(s, Scenario::default());
        assert_eq!(s.geometry_with_floor([0.0; 2]).pixel_count(), 304);
        assert_eq!(s.dataset_spec(), DatasetSpec::default());
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut s = Scenario::default();
        s.impairments.rician_k = f64::INFINITY;
        s.geometry.noise_floor_dbm = NoiseFloor::Fixed([-20.5, -3.25]);
        let back = Scenario::parse(&s.to_toml()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());
        assert_ne!(Scenario::default().hash(), s.hash());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Scenario::parse("format = \"x\""), Err(Error::BadMagic { .. })));
        assert!(matches!(Scenario::parse("version = 9"), Err(Error::UnsupportedVersion { .. })));
        assert!(matches!(Scenario::parse("[geometry]\nbogus = 1"), Err(Error::Config(_))));
        assert!(Scenario::parse("[geometry]\nnoise_floor_dbm = \"loud\"").is_err());
        assert!(Scenario::parse("[geometry]\nd1 = -1.0").is_err());
        assert!(Scenario::parse("[optimizer]\nstrategy = \"anneal\"").is_err());
        assert!(Scenario::parse("[optimizer]\ntargets = [\"user3\"]").is_err());
    }

    #[test]
    fn sections_override_defaults() {
        let s = Scenario::parse("seed = 7\n[dataset]\nframes_per_class = 10\n[geometry]\nnoise_floor_dbm = [-1.0, -2.0]\n")
            .unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.dataset_spec().frames_per_class, 10);
        assert_eq!(s.dataset_spec().master_seed, 7);
        assert_eq!(s.fixed_noise_floor(), Some([-1.0, -2.0]));
    }
}
