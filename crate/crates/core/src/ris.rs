//! Cascaded transmitter → RIS → user channel for binary-phase pixels.
//!
//! Coordinates: every RIS lies in the `z = 0` plane with its normal along
//! `+z`. An endpoint at azimuth φ and elevation θ (degrees, elevation taken
//! from the surface so 90° is broadside) sits at
//! `d·(cos θ, sin θ sin φ, sin θ cos φ)` from the array centre. Pixels form a
//! `rows × cols` grid per RIS; the RISs are stacked along `y`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::impairments::{impair, ImpairmentProfile};
use crate::sigsynth::LabeledFrame;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One binary phase state per pixel: `false` → 0, `true` → π.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RisConfiguration {
    bits: Vec<bool>,
}

impl RisConfiguration {
    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn random(len: usize, rng: &mut impl Rng) -> Self {
        Self {
            bits: (0..len).map(|_| rng.gen()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut c = self.clone();
        c.flip(i);
        c
    }

    /// `±1` reflection factor of pixel `i`.
    pub fn sign(&self, i: usize) -> f64 {
        if self.bits[i] {
            -1.0
        } else {
            1.0
        }
    }

    /// Hex string, pixel 0 in the most significant bit of the first digit;
    /// a trailing partial digit is zero padded.
    pub fn to_hex(&self) -> String {
        self.bits
            .chunks(4)
            .map(|c| {
                let v = c.iter().enumerate().fold(0u32, |acc, (j, &b)| acc | (u32::from(b) << (3 - j)));
                char::from_digit(v, 16).expect("nibble")
            })
            .collect()
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self> {
        let s = s.trim();
        if s.len() != len.div_ceil(4) {
            return Err(Error::Format(format!(
                "config hex has {} digits, expected {} for {len} pixels",
                s.len(),
                len.div_ceil(4)
            )));
        }
        let mut bits = Vec::with_capacity(s.len() * 4);
        for c in s.chars() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::Format(format!("invalid hex digit {c:?}")))?;
            bits.extend((0..4).map(|j| v & (1 << (3 - j)) != 0));
        }
        if bits[len..].iter().any(|&b| b) {
            return Err(Error::Format("non-zero padding bits in config hex".into()));
        }
        bits.truncate(len);
        Ok(Self { bits })
    }
}

impl fmt::Display for RisConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum User {
    User1,
    User2,
}

impl User {
    pub const BOTH: [User; 2] = [User::User1, User::User2];

    pub fn index(self) -> usize {
        match self {
            User::User1 => 0,
            User::User2 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            User::User1 => "user1",
            User::User2 => "user2",
        }
    }
}

impl fmt::Display for User {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Tx,
    User(User),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angles {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Angles {
    pub const fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
        }
    }

    /// Unit vector towards the endpoint.
    pub fn direction(&self) -> [f64; 3] {
        let (az, el) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        [el.cos(), el.sin() * az.sin(), el.sin() * az.cos()]
    }
}

/// Pixel grid of the RIS assembly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisLayout {
    pub ris_count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pitch_m: f64,
    /// Centre-to-centre distance between neighbouring RISs along `y`.
    pub ris_spacing_m: f64,
}

impl Default for RisLayout {
    fn default() -> Self {
        Self {
            ris_count: 2,
            rows: 8,
            cols: 19,
            pitch_m: 0.03,
            ris_spacing_m: 0.30,
        }
    }
}

impl RisLayout {
    pub fn pixels_per_ris(&self) -> usize {
        self.rows * self.cols
    }

    pub fn pixel_count(&self) -> usize {
        self.ris_count * self.pixels_per_ris()
    }

    /// Position of pixel `n` in metres.
    pub fn pixel_position(&self, n: usize) -> [f64; 3] {
        let per = self.pixels_per_ris();
        let (ris, local) = (n / per, n % per);
        let (row, col) = (local / self.cols, local % self.cols);
        let centre = |i: usize, count: usize| i as f64 - (count as f64 - 1.0) / 2.0;
        [
            centre(col, self.cols) * self.pitch_m,
            centre(ris, self.ris_count) * self.ris_spacing_m + centre(row, self.rows) * self.pitch_m,
            0.0,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub tx: Angles,
    pub user1: Angles,
    pub user2: Angles,
    /// Tx–RIS distance.
    pub d0: f64,
    /// RIS–user1 distance.
    pub d1: f64,
    /// RIS–user2 distance.
    pub d2: f64,
    pub tx_power_dbm: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: [f64; 2],
    pub noise_floor_dbm: [f64; 2],
    pub carrier_freq_hz: f64,
    pub layout: RisLayout,
    /// Element pattern `cos^q θ` with `θ` measured from the normal.
    pub element_exponent: f64,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        Self {
            tx: Angles::new(0.0, 110.0),
            user1: Angles::new(0.0, 120.0),
            user2: Angles::new(0.0, 35.0),
            d0: 1.5,
            d1: 2.0,
            d2: 3.0,
            tx_power_dbm: 0.0,
            tx_gain_db: 0.0,
            rx_gain_db: [45.0, 62.0],
            noise_floor_dbm: [-30.0, -30.0],
            carrier_freq_hz: 5e9,
            layout: RisLayout::default(),
            element_exponent: 1.0,
        }
    }
}

impl SceneGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGeometry(m));
        for (name, d) in [("d0", self.d0), ("d1", self.d1), ("d2", self.d2)] {
            if !(d > 0.0 && d.is_finite()) {
                return bad(format!("{name} = {d} must be a positive distance"));
            }
        }
        for (name, a) in [("tx", self.tx), ("user1", self.user1), ("user2", self.user2)] {
            if !(0.0..=180.0).contains(&a.elevation_deg) || !(-180.0..=180.0).contains(&a.azimuth_deg) {
                return bad(format!("{name} angles ({}, {}) out of range", a.azimuth_deg, a.elevation_deg));
            }
        }
        let l = &self.layout;
        if l.ris_count == 0 || l.rows == 0 || l.cols == 0 {
            return bad("RIS layout has no pixels".into());
        }
        if !(l.pitch_m > 0.0) || !(l.ris_spacing_m >= 0.0) {
            return bad("pixel pitch must be > 0 and RIS spacing >= 0".into());
        }
        if !(self.carrier_freq_hz > 0.0) || !(self.element_exponent >= 0.0) {
            return bad("carrier frequency and element exponent must be positive".into());
        }
        let finite = [self.tx_power_dbm, self.tx_gain_db, self.rx_gain_db[0], self.rx_gain_db[1]]
            .into_iter()
            .chain(self.noise_floor_dbm)
            .all(f64::is_finite);
        if !finite {
            return bad("link-budget terms must be finite".into());
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.layout.pixel_count()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn endpoint_position(&self, e: Endpoint) -> [f64; 3] {
        let (a, d) = match e {
            Endpoint::Tx => (self.tx, self.d0),
            Endpoint::User(User::User1) => (self.user1, self.d1),
            Endpoint::User(User::User2) => (self.user2, self.d2),
        };
        a.direction().map(|c| c * d)
    }

    fn element_gain(&self, cos_theta: f64) -> f64 {
        if cos_theta <= 0.0 {
            0.0
        } else {
            cos_theta.powf(self.element_exponent)
        }
    }
}

/// Path coefficient between pixel `n` and an endpoint:
/// `sqrt(G(θ))·λ/(4πd)·e^{−j2πd/λ}` with the exact pixel distance `d`.
pub fn pixel_path_gain(geometry: &SceneGeometry, n: usize, endpoint: Endpoint) -> Result<Complex64> {
    let len = geometry.pixel_count();
    if n >= len {
        return Err(Error::IndexOutOfRange { index: n, len });
    }
    let p = geometry.layout.pixel_position(n);
    let e = geometry.endpoint_position(endpoint);
    let v = [e[0] - p[0], e[1] - p[1], e[2] - p[2]];
    let d = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let lambda = geometry.wavelength();
    let amp = geometry.element_gain(v[2] / d).sqrt() * lambda / (4.0 * PI * d);
    Ok(Complex64::from_polar(amp, -2.0 * PI * d / lambda))
}

/// Per-pixel cascaded terms `a_n(tx)·a_n(user)` for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadedChannel {
    terms: Vec<Complex64>,
}

impl CascadedChannel {
    pub fn new(geometry: &SceneGeometry, user: User) -> Result<Self> {
        geometry.validate()?;
        let terms = (0..geometry.pixel_count())
            .map(|n| Ok(pixel_path_gain(geometry, n, Endpoint::Tx)? * pixel_path_gain(geometry, n, Endpoint::User(user))?))
            .collect::<Result<_>>()?;
        Ok(Self { terms })
    }

    pub fn from_terms(terms: Vec<Complex64>) -> Self {
        Self { terms }
    }

    pub fn terms(&self) -> &[Complex64] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Σ_n term_n · e^{jπ·bit_n}`.
    pub fn gain(&self, cfg: &RisConfiguration) -> Result<Complex64> {
        if cfg.len() != self.terms.len() {
            return Err(Error::InvalidGeometry(format!(
                "configuration has {} bits, channel has {} pixels",
                cfg.len(),
                self.terms.len()
            )));
        }
        Ok(self.terms.iter().enumerate().map(|(n, t)| t * cfg.sign(n)).sum())
    }

    /// Change of the gain caused by flipping bit `n` of `cfg`.
    pub fn flip_delta(&self, cfg: &RisConfiguration, n: usize) -> Complex64 {
        -2.0 * cfg.sign(n) * self.terms[n]
    }

    /// Mean `|h|²` over uniformly random configurations.
    pub fn mean_random_power(&self) -> f64 {
        self.terms.iter().map(|t| t.norm_sqr()).sum()
    }

    /// Configuration whose every term lies within ±π/2 of `reference`.
    pub fn aligned_config(&self, reference: f64) -> RisConfiguration {
        let r = Complex64::from_polar(1.0, -reference);
        RisConfiguration::from_bits(self.terms.iter().map(|t| (t * r).re < 0.0).collect())
    }

    /// Configuration maximizing `|h|`. The optimum is aligned with some
    /// reference direction, and the aligned configuration only changes where
    /// the reference crosses `arg(t_n) ± π/2`, so probing one direction inside
    /// every arc between those crossings is exhaustive.
    pub fn max_gain_config(&self) -> RisConfiguration {
        let mut cuts: Vec<f64> = self
            .terms
            .iter()
            .flat_map(|t| {
                let a = t.arg();
                [a + PI / 2.0, a - PI / 2.0]
            })
            .map(|a| a.rem_euclid(2.0 * PI))
            .collect();
        if cuts.is_empty() {
            return RisConfiguration::zeros(0);
        }
        cuts.sort_by(f64::total_cmp);
        let mut best = (f64::NEG_INFINITY, RisConfiguration::zeros(self.terms.len()));
        for (i, &c) in cuts.iter().enumerate() {
            let next = if i + 1 < cuts.len() { cuts[i + 1] } else { cuts[0] + 2.0 * PI };
            let cfg = self.aligned_config((c + next) / 2.0);
            let g = self.gain(&cfg).expect("length matches").norm();
            if g > best.0 {
                best = (g, cfg);
            }
        }
        best.1
    }
}

pub fn cascaded_gain(cfg: &RisConfiguration, geometry: &SceneGeometry, user: User) -> Result<Complex64> {
    CascadedChannel::new(geometry, user)?.gain(cfg)
}

/// `P + Gt + 20·log10|h| + Gr − NF`; `-inf` when `|h| = 0`.
pub fn snr_from_gain(gain_abs: f64, geometry: &SceneGeometry, user: User) -> f64 {
    let u = user.index();
    geometry.tx_power_dbm + geometry.tx_gain_db + 20.0 * gain_abs.log10() + geometry.rx_gain_db[u]
        - geometry.noise_floor_dbm[u]
}

pub fn received_snr(cfg: &RisConfiguration, geometry: &SceneGeometry, user: User) -> Result<f64> {
    Ok(snr_from_gain(cascaded_gain(cfg, geometry, user)?.norm(), geometry, user))
}

/// SNR corresponding to the mean random-configuration power `E|h|²`.
pub fn mean_random_snr(geometry: &SceneGeometry, user: User) -> Result<f64> {
    let p = CascadedChannel::new(geometry, user)?.mean_random_power();
    Ok(snr_from_gain(p.sqrt(), geometry, user))
}

/// Noise floor that puts the mean random-configuration SNR of `user` at
/// `target_snr_db`.
pub fn calibrate_noise_floor(geometry: &SceneGeometry, user: User, target_snr_db: f64) -> Result<f64> {
    let current = mean_random_snr(geometry, user)?;
    Ok(geometry.noise_floor_dbm[user.index()] + current - target_snr_db)
}

/// Rotate by `arg(h)` and run the impairment chain at the SNR implied by `h`.
pub fn apply_channel_gain(
    frame: LabeledFrame,
    gain: Complex64,
    geometry: &SceneGeometry,
    user: User,
    profile: &ImpairmentProfile,
    rng: &mut impl Rng,
) -> Result<LabeledFrame> {
    let mut frame = frame;
    let rot = Complex64::from_polar(1.0, gain.arg());
    frame.samples.iter_mut().for_each(|z| *z *= rot);
    let profile = ImpairmentProfile {
        snr_db: snr_from_gain(gain.norm(), geometry, user),
        ..*profile
    };
    impair(frame, &profile, rng)
}

pub fn apply_channel(
    frame: LabeledFrame,
    cfg: &RisConfiguration,
    geometry: &SceneGeometry,
    user: User,
    profile: &ImpairmentProfile,
    rng: &mut impl Rng,
) -> Result<LabeledFrame> {
    let h = cascaded_gain(cfg, geometry, user)?;
    apply_channel_gain(frame, h, geometry, user, profile, rng)
}
