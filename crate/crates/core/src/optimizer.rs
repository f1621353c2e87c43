//! Search over RIS configurations: random search, greedy bit flipping with
//! restarts, and exhaustive enumeration of a pixel subset.
//!
//! Candidates are ranked by [`Evaluation::score`]: the objective value first,
//! then a secondary key (the received SNR for accuracy objectives). Accuracy
//! over a finite frame set is flat over wide regions of configuration space,
//! and the secondary key lets the search keep climbing across those plateaus.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnn::{predict_batch, Model};
use crate::error::{Error, Result};
use crate::impairments::{derive_seed, ImpairmentProfile};
use crate::metrics::ConfusionMatrix;
use crate::ris::{apply_channel_gain, snr_from_gain, CascadedChannel, RisConfiguration, SceneGeometry, User};
use crate::sigsynth::{synthesize_frame, LabeledFrame, ModulationScheme, ShapingConfig};

/// Largest pixel subset [`exhaustive`] will enumerate.
pub const MAX_EXHAUSTIVE_BITS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    User(User),
    JointMin,
    JointMean,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::User(u) => u.name(),
            Target::JointMin => "joint-min",
            Target::JointMean => "joint-mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "user1" => Ok(Target::User(User::User1)),
            "user2" => Ok(Target::User(User::User2)),
            "joint-min" => Ok(Target::JointMin),
            "joint-mean" => Ok(Target::JointMean),
            _ => Err(Error::Config(format!("unknown target {s:?}"))),
        }
    }

    pub fn users(self) -> &'static [User] {
        match self {
            Target::User(User::User1) => &[User::User1],
            Target::User(User::User2) => &[User::User2],
            _ => &User::BOTH,
        }
    }
}

/// Outcome of evaluating one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Objective value in `[0, 1]`.
    pub value: f64,
    /// Secondary ranking key.
    pub tiebreak: f64,
    /// Per-user accuracy, where computed.
    pub accuracy: [Option<f64>; 2],
    /// Per-user received SNR in dB, where computed.
    pub snr_db: [Option<f64>; 2],
}

impl Evaluation {
    pub fn plain(value: f64) -> Self {
        Self {
            value,
            tiebreak: 0.0,
            accuracy: [None; 2],
            snr_db: [None; 2],
        }
    }

    /// Lexicographic (value, tiebreak) order.
    pub fn score(&self) -> (f64, f64) {
        (self.value, self.tiebreak)
    }

    pub fn beats(&self, other: &Evaluation) -> bool {
        self.cmp_score(other) == Ordering::Greater
    }

    /// Like [`Evaluation::beats`], but values within `tol` of each other
    /// are compared on the tiebreak alone. `tol = 0` is the plain order.
    pub fn beats_within(&self, other: &Evaluation, tol: f64) -> bool {
        if self.value > other.value + tol {
            return true;
        }
        if self.value < other.value - tol {
            return false;
        }
        match self.tiebreak.total_cmp(&other.tiebreak) {
            Ordering::Equal => self.value > other.value,
            o => o == Ordering::Greater,
        }
    }

    fn cmp_score(&self, other: &Evaluation) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.tiebreak.total_cmp(&other.tiebreak))
    }
}

pub trait Objective: Sync {
    /// Configuration length.
    fn bits(&self) -> usize;

    fn evaluate(&self, cfg: &RisConfiguration) -> Result<Evaluation>;

    /// Whether repeated evaluation of one configuration gives one value.
    fn deterministic(&self) -> bool {
        true
    }
}

/// `|h_u|` normalized by `Σ|t_n|`, the SNR proxy objective.
#[derive(Debug, Clone)]
pub struct GainObjective {
    channel: CascadedChannel,
    scale: f64,
}

impl GainObjective {
    pub fn new(channel: CascadedChannel) -> Self {
        let s: f64 = channel.terms().iter().map(|t| t.norm()).sum();
        Self {
            channel,
            scale: if s > 0.0 { 1.0 / s } else { 0.0 },
        }
    }

    pub fn for_user(geometry: &SceneGeometry, user: User) -> Result<Self> {
        Ok(Self::new(CascadedChannel::new(geometry, user)?))
    }

    pub fn channel(&self) -> &CascadedChannel {
        &self.channel
    }
}

impl Objective for GainObjective {
    fn bits(&self) -> usize {
        self.channel.len()
    }

    fn evaluate(&self, cfg: &RisConfiguration) -> Result<Evaluation> {
        Ok(Evaluation::plain(
            (self.channel.gain(cfg)?.norm() * self.scale).min(1.0),
        ))
    }
}

/// Clean frames, `per_class` of every scheme, class-major.
pub fn evaluation_frames(per_class: usize, shaping: &ShapingConfig, seed: u64) -> Result<Vec<LabeledFrame>> {
    let mut out = Vec::with_capacity(5 * per_class);
    for scheme in ModulationScheme::ALL {
        for i in 0..per_class {
            let s = derive_seed(seed, &[scheme.index() as u64, i as u64, 2]);
            out.push(synthesize_frame(scheme, shaping, s)?);
        }
    }
    Ok(out)
}

/// Classification accuracy after the RIS channel.
pub struct AccuracyObjective<'a> {
    model: &'a Model<f32>,
    geometry: SceneGeometry,
    channels: [CascadedChannel; 2],
    profile: ImpairmentProfile,
    frames: Vec<LabeledFrame>,
    noise_seed: u64,
    target: Target,
    redraw: Option<AtomicU64>,
}

impl<'a> AccuracyObjective<'a> {
    pub fn new(
        model: &'a Model<f32>,
        geometry: SceneGeometry,
        profile: ImpairmentProfile,
        frames: Vec<LabeledFrame>,
        noise_seed: u64,
        target: Target,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySet);
        }
        profile.validate()?;
        let channels = [
            CascadedChannel::new(&geometry, User::User1)?,
            CascadedChannel::new(&geometry, User::User2)?,
        ];
        Ok(Self {
            model,
            geometry,
            channels,
            profile,
            frames,
            noise_seed,
            target,
            redraw: None,
        })
    }

    /// Draw fresh noise on every evaluation instead of fixing it per run.
    pub fn with_redrawn_noise(mut self) -> Self {
        self.redraw = Some(AtomicU64::new(0));
        self
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn geometry(&self) -> &SceneGeometry {
        &self.geometry
    }

    pub fn channel(&self, user: User) -> &CascadedChannel {
        &self.channels[user.index()]
    }

    /// Cascaded gain whose received SNR for `user` is `snr_db`.
    pub fn gain_for_snr(&self, user: User, snr_db: f64) -> Complex64 {
        let offset = snr_from_gain(1.0, &self.geometry, user);
        Complex64::new(10f64.powf((snr_db - offset) / 20.0), 0.0)
    }

    /// `(truth, prediction)` for every frame when the cascaded gain is `h`.
    pub fn predictions(&self, user: User, h: Complex64) -> Result<Vec<(ModulationScheme, ModulationScheme)>> {
        let tag = match &self.redraw {
            Some(c) => c.fetch_add(1, AtomicOrdering::Relaxed) + 1,
            None => 0,
        };
        let mut out = Vec::with_capacity(self.frames.len());
        for (ci, chunk) in self.frames.chunks(64).enumerate() {
            let received = chunk
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    let i = ci * 64 + j;
                    let seed = derive_seed(self.noise_seed, &[user.index() as u64, i as u64, tag]);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    apply_channel_gain(f.clone(), h, &self.geometry, user, &self.profile, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[Complex64]> = received.iter().map(|f| f.samples.as_slice()).collect();
            let preds = predict_batch(self.model, &refs)?;
            out.extend(chunk.iter().zip(preds).map(|(f, p)| (f.label, p.class)));
        }
        Ok(out)
    }

    /// Accuracy of `user` over the frame set when the cascaded gain is `h`.
    pub fn accuracy_at_gain(&self, user: User, h: Complex64) -> Result<f64> {
        let p = self.predictions(user, h)?;
        Ok(p.iter().filter(|(t, c)| t == c).count() as f64 / p.len() as f64)
    }

    pub fn accuracy_at_snr(&self, user: User, snr_db: f64) -> Result<f64> {
        self.accuracy_at_gain(user, self.gain_for_snr(user, snr_db))
    }

    pub fn confusion(&self, user: User, cfg: &RisConfiguration) -> Result<ConfusionMatrix> {
        let h = self.channels[user.index()].gain(cfg)?;
        let mut cm = ConfusionMatrix::default();
        for (t, p) in self.predictions(user, h)? {
            cm.record(t, p);
        }
        Ok(cm)
    }
}

impl Objective for AccuracyObjective<'_> {
    fn bits(&self) -> usize {
        self.channels[0].len()
    }

    fn evaluate(&self, cfg: &RisConfiguration) -> Result<Evaluation> {
        let mut e = Evaluation::plain(0.0);
        for &u in self.target.users() {
            let h = self.channels[u.index()].gain(cfg)?;
            e.snr_db[u.index()] = Some(snr_from_gain(h.norm(), &self.geometry, u));
            e.accuracy[u.index()] = Some(self.accuracy_at_gain(u, h)?);
        }
        let acc: Vec<f64> = e.accuracy.iter().flatten().copied().collect();
        let snr: Vec<f64> = e.snr_db.iter().flatten().copied().collect();
        (e.value, e.tiebreak) = match self.target {
            Target::User(_) | Target::JointMin => (
                acc.iter().copied().fold(f64::INFINITY, f64::min),
                snr.iter().copied().fold(f64::INFINITY, f64::min),
            ),
            Target::JointMean => (
                acc.iter().sum::<f64>() / acc.len() as f64,
                snr.iter().sum::<f64>() / snr.len() as f64,
            ),
        };
        Ok(e)
    }

    fn deterministic(&self) -> bool {
        self.redraw.is_none()
    }
}

/// Memoizing wrapper that counts fresh evaluations. Non-deterministic
/// objectives bypass the cache.
pub struct CachedObjective<'a> {
    inner: &'a dyn Objective,
    cache: Mutex<HashMap<RisConfiguration, Evaluation>>,
    fresh: AtomicUsize,
    hits: AtomicUsize,
}

impl<'a> CachedObjective<'a> {
    pub fn new(inner: &'a dyn Objective) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
            fresh: AtomicUsize::new(0),
            hits: AtomicUsize::new(0),
        }
    }

    pub fn bits(&self) -> usize {
        self.inner.bits()
    }

    pub fn evaluate(&self, cfg: &RisConfiguration) -> Result<Evaluation> {
        if cfg.len() != self.inner.bits() {
            return Err(Error::InvalidGeometry(format!(
                "configuration has {} bits, objective expects {}",
                cfg.len(),
                self.inner.bits()
            )));
        }
        let cacheable = self.inner.deterministic();
        if cacheable {
            if let Some(e) = self.cache.lock().expect("cache lock").get(cfg) {
                self.hits.fetch_add(1, AtomicOrdering::Relaxed);
                return Ok(*e);
            }
        }
        let e = self.inner.evaluate(cfg)?;
        self.fresh.fetch_add(1, AtomicOrdering::Relaxed);
        if cacheable {
            self.cache.lock().expect("cache lock").insert(cfg.clone(), e);
        }
        Ok(e)
    }

    /// Evaluate without consulting or filling the cache.
    pub fn recompute(&self, cfg: &RisConfiguration) -> Result<Evaluation> {
        self.inner.evaluate(cfg)
    }

    /// Fresh (non-cached) evaluations so far.
    pub fn evaluations(&self) -> usize {
        self.fresh.load(AtomicOrdering::Relaxed)
    }

    pub fn cache_hits(&self) -> usize {
        self.hits.load(AtomicOrdering::Relaxed)
    }
}

/// Joint target over two per-user objectives, sharing their caches.
pub struct JointObjective<'o, 'a> {
    users: [&'o CachedObjective<'a>; 2],
    target: Target,
}

impl<'o, 'a> JointObjective<'o, 'a> {
    /// `target` must be [`Target::JointMin`] or [`Target::JointMean`].
    pub fn new(user1: &'o CachedObjective<'a>, user2: &'o CachedObjective<'a>, target: Target) -> Result<Self> {
        if matches!(target, Target::User(_)) {
            return Err(Error::Config("joint objective needs a joint target".into()));
        }
        if user1.bits() != user2.bits() {
            return Err(Error::InvalidGeometry("user objectives disagree on the pixel count".into()));
        }
        Ok(Self {
            users: [user1, user2],
            target,
        })
    }
}

impl Objective for JointObjective<'_, '_> {
    fn bits(&self) -> usize {
        self.users[0].bits()
    }

    fn evaluate(&self, cfg: &RisConfiguration) -> Result<Evaluation> {
        let a = self.users[0].evaluate(cfg)?;
        let b = self.users[1].evaluate(cfg)?;
        let (value, tiebreak) = match self.target {
            Target::JointMean => ((a.value + b.value) / 2.0, (a.tiebreak + b.tiebreak) / 2.0),
            _ => (a.value.min(b.value), a.tiebreak.min(b.tiebreak)),
        };
        Ok(Evaluation {
            value,
            tiebreak,
            accuracy: [a.value.into(), b.value.into()],
            snr_db: [a.snr_db[0].or(a.snr_db[1]), b.snr_db[1].or(b.snr_db[0])],
        })
    }

    fn deterministic(&self) -> bool {
        self.users.iter().all(|u| u.inner.deterministic())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// One-based candidate index.
    pub iteration: usize,
    pub config: RisConfiguration,
    pub evaluation: Evaluation,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best_config: RisConfiguration,
    pub best: Evaluation,
    pub best_value: f64,
    pub trace: Vec<TraceEntry>,
    /// Fresh objective evaluations.
    pub evaluations: usize,
    /// Accepted bit flips (greedy only).
    pub flips: usize,
    pub sweeps: usize,
    /// Whether the last greedy sweep found no improving flip.
    pub converged: bool,
}

struct Tracker<'o, 'a> {
    obj: &'o CachedObjective<'a>,
    start_evals: usize,
    trace: Vec<TraceEntry>,
    best: Option<(RisConfiguration, Evaluation)>,
}

impl<'o, 'a> Tracker<'o, 'a> {
    fn new(obj: &'o CachedObjective<'a>) -> Self {
        Self {
            obj,
            start_evals: obj.evaluations(),
            trace: Vec::new(),
            best: None,
        }
    }

    fn used(&self) -> usize {
        self.obj.evaluations() - self.start_evals
    }

    fn eval(&mut self, cfg: &RisConfiguration) -> Result<Evaluation> {
        let e = self.obj.evaluate(cfg)?;
        if self.best.as_ref().map_or(true, |(_, b)| e.beats(b)) {
            self.best = Some((cfg.clone(), e));
        }
        let best_so_far = self.best.as_ref().map_or(e.value, |(_, b)| b.value);
        self.trace.push(TraceEntry {
            iteration: self.trace.len() + 1,
            config: cfg.clone(),
            evaluation: e,
            best_so_far,
        });
        Ok(e)
    }

    fn finish(self, flips: usize, sweeps: usize, converged: bool) -> OptimizationResult {
        let evaluations = self.used();
        let (best_config, best) = self.best.expect("at least one evaluation");
        OptimizationResult {
            best_config,
            best_value: best.value,
            best,
            trace: self.trace,
            evaluations,
            flips,
            sweeps,
            converged,
        }
    }
}

/// Evaluate `n` uniformly random configurations.
pub fn random_search(obj: &CachedObjective, n: usize, rng: &mut impl Rng) -> Result<OptimizationResult> {
    if n == 0 {
        return Err(Error::Config("random search needs at least one sample".into()));
    }
    let mut t = Tracker::new(obj);
    for _ in 0..n {
        t.eval(&RisConfiguration::random(obj.bits(), rng))?;
    }
    Ok(t.finish(0, 0, false))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyOptions {
    pub max_sweeps: usize,
    /// Total starts; the first uses the supplied initial configuration and
    /// the rest are uniformly random.
    pub starts: usize,
    /// Stop once this many fresh evaluations have been spent.
    pub max_evaluations: Option<usize>,
    /// Accept a flip whose value is within this much of the current one
    /// when it wins on the tiebreak (see [`Evaluation::beats_within`]).
    pub tolerance: f64,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 6,
            starts: 1,
            max_evaluations: Some(2000),
            tolerance: 0.0,
        }
    }
}

/// Single-start greedy bit flipping.
pub fn greedy_bitflip(
    obj: &CachedObjective,
    init: &RisConfiguration,
    max_sweeps: usize,
    rng: &mut impl Rng,
) -> Result<OptimizationResult> {
    greedy_restarts(
        obj,
        init,
        GreedyOptions {
            max_sweeps,
            starts: 1,
            max_evaluations: None,
            tolerance: 0.0,
        },
        rng,
    )
}

/// Greedy bit flipping: sweep pixels in a fresh random order, flip a bit
/// whenever that beats the current score under `opts.tolerance`, stop after a sweep without
/// improvement or after `max_sweeps`. Repeated from random starts while the
/// evaluation budget lasts.
pub fn greedy_restarts(
    obj: &CachedObjective,
    init: &RisConfiguration,
    opts: GreedyOptions,
    rng: &mut impl Rng,
) -> Result<OptimizationResult> {
    if opts.max_sweeps == 0 || opts.starts == 0 {
        return Err(Error::Config("greedy search needs max_sweeps >= 1 and starts >= 1".into()));
    }
    let n = obj.bits();
    let mut t = Tracker::new(obj);
    let budget_left = |t: &Tracker| opts.max_evaluations.map_or(true, |m| t.used() < m);
    let (mut flips, mut sweeps, mut converged) = (0, 0, false);
    let mut order: Vec<usize> = (0..n).collect();
    for start in 0..opts.starts {
        if start > 0 && !budget_left(&t) {
            break;
        }
        let mut current = if start == 0 { init.clone() } else { RisConfiguration::random(n, rng) };
        let mut cur = t.eval(&current)?;
        converged = false;
        for _ in 0..opts.max_sweeps {
            order.shuffle(rng);
            sweeps += 1;
            let mut improved = false;
            for &i in &order {
                if !budget_left(&t) {
                    break;
                }
                let cand = current.flipped(i);
                let e = t.eval(&cand)?;
                if e.beats_within(&cur, opts.tolerance) {
                    current = cand;
                    cur = e;
                    improved = true;
                    flips += 1;
                }
            }
            if !improved {
                converged = budget_left(&t);
                break;
            }
            if !budget_left(&t) {
                break;
            }
        }
    }
    Ok(t.finish(flips, sweeps, converged))
}

/// Every assignment of the bits in `subset`, others frozen at `base`.
pub fn exhaustive(obj: &CachedObjective, base: &RisConfiguration, subset: &[usize]) -> Result<OptimizationResult> {
    if subset.len() > MAX_EXHAUSTIVE_BITS {
        return Err(Error::SubsetTooLarge(subset.len()));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= base.len()) {
        return Err(Error::IndexOutOfRange { index: i, len: base.len() });
    }
    let mut t = Tracker::new(obj);
    let mut cfg = base.clone();
    for mask in 0u32..(1 << subset.len()) {
        for (j, &i) in subset.iter().enumerate() {
            cfg.set(i, mask >> j & 1 == 1);
        }
        t.eval(&cfg)?;
    }
    Ok(t.finish(0, 0, false))
}

/// Whether any single flip of `cfg` beats it (served from the cache).
pub fn improving_flip(obj: &CachedObjective, cfg: &RisConfiguration) -> Result<Option<usize>> {
    let e = obj.evaluate(cfg)?;
    for i in 0..cfg.len() {
        if obj.evaluate(&cfg.flipped(i))?.beats(&e) {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: RisConfiguration,
    pub accuracy: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub threshold: f64,
}

impl SweepTable {
    /// Rows where both users exceed the threshold.
    pub fn both_above(&self) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.accuracy[0].min(r.accuracy[1]) > self.threshold)
            .collect()
    }
}

/// Evaluate every configuration for both users.
pub fn multi_user_sweep(
    user1: &CachedObjective,
    user2: &CachedObjective,
    configs: &[RisConfiguration],
    threshold: f64,
) -> Result<SweepTable> {
    if user1.bits() != user2.bits() {
        return Err(Error::InvalidGeometry("user objectives disagree on the pixel count".into()));
    }
    let rows = configs
        .iter()
        .map(|c| {
            Ok(SweepRow {
                config: c.clone(),
                accuracy: [user1.evaluate(c)?.value, user2.evaluate(c)?.value],
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { rows, threshold })
}

/// Distinct configurations of a trace, in first-visit order.
pub fn visited_configs(trace: &[TraceEntry]) -> Vec<RisConfiguration> {
    let mut seen = std::collections::HashSet::new();
    trace
        .iter()
        .filter(|e| seen.insert(e.config.clone()))
        .map(|e| e.config.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ris::RisLayout;

    fn toy(pixels: usize) -> GainObjective {
        let g = SceneGeometry {
            layout: RisLayout {
                ris_count: 1,
                rows: 1,
                cols: pixels,
                ..Default::default()
            },
            ..Default::default()
        };
        GainObjective::for_user(&g, User::User1).unwrap()
    }

    #[test]
    fn score_order_is_lexicographic() {
        let a = Evaluation { tiebreak: 5.0, ..Evaluation::plain(0.5) };
        let b = Evaluation { tiebreak: 1.0, ..Evaluation::plain(0.6) };
        let c = Evaluation { tiebreak: 6.0, ..Evaluation::plain(0.5) };
        assert!(b.beats(&a));
        assert!(c.beats(&a));
        assert!(!a.beats(&a));
    }

    #[test]
    fn cache_counts_fresh_evaluations() {
        let g = toy(4);
        let obj = CachedObjective::new(&g);
        let c = RisConfiguration::zeros(4);
        let a = obj.evaluate(&c).unwrap();
        let b = obj.evaluate(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(obj.evaluations(), 1);
        assert_eq!(obj.cache_hits(), 1);
        assert_eq!(obj.recompute(&c).unwrap(), a);
        assert!(obj.evaluate(&RisConfiguration::zeros(5)).is_err());
    }

    #[test]
    fn random_search_single_sample() {
        let g = toy(6);
        let obj = CachedObjective::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = random_search(&obj, 1, &mut rng).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.best_value, r.trace[0].evaluation.value);
        assert!(random_search(&obj, 0, &mut rng).is_err());
    }

    #[test]
    fn greedy_from_optimum_makes_no_flips() {
        let g = toy(10);
        let best = g.channel().max_gain_config();
        let obj = CachedObjective::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = greedy_bitflip(&obj, &best, 5, &mut rng).unwrap();
        assert_eq!(r.flips, 0);
        assert_eq!(r.sweeps, 1);
        assert!(r.converged);
        assert_eq!(r.best_config, best);
    }

    #[test]
    fn greedy_budget_is_respected() {
        let g = toy(50);
        let obj = CachedObjective::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let init = RisConfiguration::random(50, &mut rng);
        let opts = GreedyOptions {
            max_sweeps: 10,
            starts: 3,
            max_evaluations: Some(70),
            tolerance: 0.0,
        };
        let r = greedy_restarts(&obj, &init, opts, &mut rng).unwrap();
        assert!(r.evaluations <= 70);
    }

    #[test]
    fn exhaustive_limits() {
        let g = toy(21);
        let obj = CachedObjective::new(&g);
        let base = RisConfiguration::zeros(21);
        let all: Vec<usize> = (0..21).collect();
        assert!(matches!(exhaustive(&obj, &base, &all), Err(Error::SubsetTooLarge(21))));
        let r = exhaustive(&obj, &base, &[3]).unwrap();
        assert_eq!(r.trace.len(), 2);
        let m = r.trace.iter().map(|e| e.evaluation.value).fold(0.0, f64::max);
        assert_eq!(r.best_value, m);
    }

    #[test]
    fn target_names_round_trip() {
        for t in [Target::User(User::User1), Target::User(User::User2), Target::JointMin, Target::JointMean] {
            assert_eq!(Target::parse(t.name()).unwrap(), t);
        }
    }
}
