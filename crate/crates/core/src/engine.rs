//! Process driver.
//!
//! The configuration at time `t + 1` is the core selected at time `t`
//! followed by `K` fresh draws; the record for `t + 1` describes the core
//! selected out of that pool. Each step consumes the random stream in a fixed
//! order: the `K` draws first, then any tie-breaking inside the selection.

use serde::{Deserialize, Serialize};

use crate::core_select::{CoreSelection, CoreSelector};
use crate::distributions::{first_coordinate_quartiles, make_sampler, DistributionSpec, Sampler};
use crate::error::{Error, Result};
use crate::geometry::{self, dist_sq, PointConfiguration};
use crate::rng::{self, SimRng};

fn default_tol_f() -> f64 {
    1e-12
}
fn default_move_window() -> u64 {
    1000
}
fn default_tol_move() -> f64 {
    1e-9
}
fn default_diverge_radius() -> f64 {
    1e6
}
fn default_min_crossings() -> u64 {
    10
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub dim: usize,
    pub dist: DistributionSpec,
    pub seed: u64,
    /// Stream selector; batch runs use their run index.
    #[serde(default)]
    pub replica: u64,
    pub max_steps: u64,
    #[serde(default = "default_tol_f")]
    pub tol_f: f64,
    #[serde(default = "default_move_window")]
    pub move_window: u64,
    #[serde(default = "default_tol_move")]
    pub tol_move: f64,
    #[serde(default = "default_diverge_radius")]
    pub diverge_radius: f64,
    #[serde(default)]
    pub initial_points: Option<Vec<Vec<f64>>>,
    /// Relative tie tolerance for core selection; 0 means exact equality.
    #[serde(default)]
    pub tie_tol: f64,
    /// Thresholds `(a, b)` on coordinate 0 of the core barycentre used to
    /// count oscillations. Derived from the law when absent.
    #[serde(default)]
    pub oscillation_band: Option<(f64, f64)>,
    /// Crossings of the band needed to call a run oscillating.
    #[serde(default = "default_min_crossings")]
    pub min_crossings: u64,
}

impl RunConfig {
    pub fn new(n: usize, k: usize, dist: DistributionSpec, seed: u64, max_steps: u64) -> Self {
        Self {
            n,
            k,
            dim: dist.dim,
            dist,
            seed,
            replica: 0,
            max_steps,
            tol_f: default_tol_f(),
            move_window: default_move_window(),
            tol_move: default_tol_move(),
            diverge_radius: default_diverge_radius(),
            initial_points: None,
            tie_tol: 0.0,
            oscillation_band: None,
            min_crossings: default_min_crossings(),
        }
    }

    pub fn with_initial_points(mut self, points: Vec<Vec<f64>>) -> Self {
        self.initial_points = Some(points);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 3 {
            return bad(format!("N = {} must be at least 3", self.n));
        }
        if self.k == 0 || self.k + 2 > self.n {
            return Err(Error::InvalidK {
                n: self.n,
                k: self.k,
            });
        }
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.dist.dim != self.dim {
            return bad(format!(
                "dist.dim = {} does not match dim = {}",
                self.dist.dim, self.dim
            ));
        }
        for (name, v) in [
            ("tol_f", self.tol_f),
            ("tol_move", self.tol_move),
            ("diverge_radius", self.diverge_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.move_window == 0 {
            return bad("move_window must be positive".into());
        }
        if !(self.tie_tol.is_finite() && self.tie_tol >= 0.0) {
            return bad(format!(
                "tie_tol must be non-negative, got {}",
                self.tie_tol
            ));
        }
        if let Some((a, b)) = self.oscillation_band {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return bad(format!("oscillation_band ({a}, {b}) needs a < b"));
            }
        }
        if let Some(points) = &self.initial_points {
            if points.len() != self.n {
                return Err(Error::BadInitial(format!(
                    "{} initial points for N = {}",
                    points.len(),
                    self.n
                )));
            }
            for (i, p) in points.iter().enumerate() {
                if p.len() != self.dim {
                    return Err(Error::BadInitial(format!(
                        "point {i} has {} coordinates, expected {}",
                        p.len(),
                        self.dim
                    )));
                }
                if p.iter().any(|c| !c.is_finite()) {
                    return Err(Error::BadInitial(format!("point {i} is not finite")));
                }
            }
        }
        Ok(())
    }

    /// Whether `2K < N`, the regime in which a core cannot be replaced wholesale.
    pub fn stable_regime(&self) -> bool {
        2 * self.k < self.n
    }
}

/// Statistics of the core selected at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    /// Core energy `F(t)`.
    #[serde(rename = "F")]
    pub f: f64,
    /// Core range `D(t)`.
    #[serde(rename = "D")]
    pub d: f64,
    /// Core barycentre.
    pub mu_core: Vec<f64>,
    /// The kept point multiset differs from the previous core.
    pub core_changed: bool,
    /// Exactly the fresh draws were removed.
    pub all_samples_rejected: bool,
    /// Smallest distance between a fresh draw and a previous core point;
    /// absent at `t = 0`.
    pub min_sample_core_dist: Option<f64>,
    pub tie_count: u64,
    /// Smallest norm among core points.
    pub origin_dist: f64,
}

/// Classification of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    ConvergedToPoint,
    Diverged,
    OscillatingCore,
    Undecided,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 4] = [
        OutcomeKind::ConvergedToPoint,
        OutcomeKind::Diverged,
        OutcomeKind::OscillatingCore,
        OutcomeKind::Undecided,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeKind::ConvergedToPoint => "ConvergedToPoint",
            OutcomeKind::Diverged => "Diverged",
            OutcomeKind::OscillatingCore => "OscillatingCore",
            OutcomeKind::Undecided => "Undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub final_f: f64,
    pub final_d: f64,
    pub final_origin_dist: f64,
    /// Completed crossings of the oscillation band.
    pub crossings: u64,
    /// Time of the last record.
    pub steps: u64,
    /// First time `F < tol_f`, if reached.
    pub first_t_below_tol_f: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    /// Limit point; present iff `kind` is `ConvergedToPoint`.
    pub phi: Option<Vec<f64>>,
    pub evidence: Evidence,
}

/// Finite-horizon decision rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tol_f: f64,
    pub move_window: u64,
    pub tol_move: f64,
    pub diverge_radius: f64,
    pub band: (f64, f64),
    pub min_crossings: u64,
    pub max_steps: u64,
    /// `2K < N`; enables the exact absorption rule for a zero-range core.
    pub stable_regime: bool,
}

impl Thresholds {
    /// Thresholds of `config`, deriving the oscillation band from the law
    /// when the config does not fix one.
    pub fn from_config(config: &RunConfig, sampler: &Sampler) -> Self {
        Self {
            tol_f: config.tol_f,
            move_window: config.move_window,
            tol_move: config.tol_move,
            diverge_radius: config.diverge_radius,
            band: config
                .oscillation_band
                .unwrap_or_else(|| default_band(&config.dist, sampler)),
            min_crossings: config.min_crossings,
            max_steps: config.max_steps,
            stable_regime: config.stable_regime(),
        }
    }
}

/// Quarter points between the extreme atoms for atomic laws, otherwise the
/// quartiles of coordinate 0.
pub fn default_band(dist: &DistributionSpec, sampler: &Sampler) -> (f64, f64) {
    let (lo, hi) = match dist.atoms_first_coordinate() {
        Some(atoms) => {
            let lo = atoms.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = atoms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let q = (hi - lo) / 4.0;
            (lo + q, hi - q)
        }
        None => first_coordinate_quartiles(sampler),
    };
    if lo < hi {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Low,
    High,
}

/// Counts completed passages of a scalar across `(a, b)`. A passage counts
/// only once the value has left the open interval on the far side.
#[derive(Debug, Clone)]
pub struct CrossingCounter {
    a: f64,
    b: f64,
    side: Option<Side>,
    count: u64,
}

impl CrossingCounter {
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            a,
            b,
            side: None,
            count: 0,
        }
    }

    pub fn observe(&mut self, x: f64) {
        let s = if x <= self.a {
            Side::Low
        } else if x >= self.b {
            Side::High
        } else {
            return;
        };
        if self.side.is_some_and(|p| p != s) {
            self.count += 1;
        }
        self.side = Some(s);
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Incremental form of [`classify`], fed one record at a time.
#[derive(Debug, Clone)]
pub struct Classifier {
    th: Thresholds,
    anchor: Vec<f64>,
    anchor_t: u64,
    crossings: CrossingCounter,
    first_below: Option<u64>,
    last: Option<StepRecord>,
}

impl Classifier {
    pub fn new(th: Thresholds) -> Self {
        let crossings = CrossingCounter::new(th.band.0, th.band.1);
        Self {
            th,
            anchor: Vec::new(),
            anchor_t: 0,
            crossings,
            first_below: None,
            last: None,
        }
    }

    /// Feeds one record; returns an outcome if the run should stop here.
    pub fn observe(&mut self, rec: &StepRecord) -> Option<Outcome> {
        if self.last.is_none() || dist_sq(&rec.mu_core, &self.anchor).sqrt() >= self.th.tol_move {
            self.anchor.clone_from(&rec.mu_core);
            self.anchor_t = rec.t;
        }
        self.crossings.observe(rec.mu_core[0]);
        if rec.f < self.th.tol_f && self.first_below.is_none() {
            self.first_below = Some(rec.t);
        }
        self.last = Some(rec.clone());

        // a zero-range core is absorbing when 2K < N: any other zero-energy
        // subset would have to contain an old core point
        let absorbed = rec.d == 0.0 && self.th.stable_regime;
        let settled = rec.f < self.th.tol_f && rec.t - self.anchor_t >= self.th.move_window;
        if absorbed || settled {
            Some(self.outcome(OutcomeKind::ConvergedToPoint))
        } else if rec.origin_dist > self.th.diverge_radius {
            Some(self.outcome(OutcomeKind::Diverged))
        } else if rec.t >= self.th.max_steps {
            Some(self.finish())
        } else {
            None
        }
    }

    /// Verdict once the records are exhausted without an earlier stop.
    pub fn finish(&self) -> Outcome {
        if self.crossings.count() >= self.th.min_crossings {
            self.outcome(OutcomeKind::OscillatingCore)
        } else {
            self.outcome(OutcomeKind::Undecided)
        }
    }

    fn outcome(&self, kind: OutcomeKind) -> Outcome {
        let last = self.last.as_ref().expect("classifier saw no records");
        Outcome {
            kind,
            phi: (kind == OutcomeKind::ConvergedToPoint).then(|| last.mu_core.clone()),
            evidence: Evidence {
                final_f: last.f,
                final_d: last.d,
                final_origin_dist: last.origin_dist,
                crossings: self.crossings.count(),
                steps: last.t,
                first_t_below_tol_f: self.first_below,
            },
        }
    }
}

/// Classifies a finished sequence of records. Agrees with the verdict
/// [`run`] reaches when it stops.
pub fn classify(records: &[StepRecord], thresholds: &Thresholds) -> Result<Outcome> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("empty trajectory".into()));
    }
    let mut c = Classifier::new(thresholds.clone());
    for rec in records {
        if let Some(out) = c.observe(rec) {
            return Ok(out);
        }
    }
    Ok(c.finish())
}

/// A finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: RunConfig,
    pub records: Vec<StepRecord>,
    pub final_core: Vec<Vec<f64>>,
    pub outcome: Outcome,
    pub thresholds: Thresholds,
    /// Explicit initial points were not checked against the support.
    pub initial_support_unchecked: bool,
}

/// The initial configuration: explicit points verbatim, otherwise `N` draws.
pub fn init_state(
    config: &RunConfig,
    sampler: &Sampler,
    rng: &mut SimRng,
) -> Result<PointConfiguration> {
    config.validate()?;
    match &config.initial_points {
        Some(points) => {
            PointConfiguration::from_points(points).map_err(|e| Error::BadInitial(e.to_string()))
        }
        None => {
            let mut coords = vec![0.0; config.n * config.dim];
            for p in coords.chunks_exact_mut(config.dim) {
                sampler.sample_into(rng, p);
            }
            PointConfiguration::from_flat(coords, config.dim)
        }
    }
}

/// Configuration and selected core at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessState {
    pub t: u64,
    pub pool: PointConfiguration,
    pub selection: CoreSelection,
}

impl ProcessState {
    pub fn core(&self) -> PointConfiguration {
        self.pool
            .subset(&self.selection.kept)
            .expect("kept set is nonempty")
    }
}

/// A run in progress: state plus the stream and scratch it owns.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: RunConfig,
    sampler: Sampler,
    selector: CoreSelector,
    rng: SimRng,
    state: ProcessState,
    fresh: Vec<f64>,
}

impl Simulation {
    /// Draws or loads `X(0)` and selects its core. Returns the `t = 0` record.
    pub fn start(config: &RunConfig) -> Result<(Self, StepRecord)> {
        config.validate()?;
        let sampler = make_sampler(&config.dist)?;
        let mut rng = rng::stream(config.seed, config.replica);
        let pool = init_state(config, &sampler, &mut rng)?;
        let mut selector = CoreSelector::new().with_tie_tolerance(config.tie_tol);
        let selection = selector.select(&pool, config.k, &mut rng)?;
        let state = ProcessState {
            t: 0,
            pool,
            selection,
        };
        let record = describe(&state, None);
        Ok((
            Self {
                config: config.clone(),
                sampler,
                selector,
                rng,
                state,
                fresh: vec![0.0; config.dim],
            },
            record,
        ))
    }

    pub fn state(&self) -> &ProcessState {
        &self.state
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<StepRecord> {
        let (k, dim) = (self.config.k, self.config.dim);
        let old_core = self.state.core();
        let mut coords = Vec::with_capacity(self.config.n * dim);
        coords.extend_from_slice(old_core.as_flat());
        for _ in 0..k {
            self.sampler.sample_into(&mut self.rng, &mut self.fresh);
            coords.extend_from_slice(&self.fresh);
        }
        let pool = PointConfiguration::from_flat(coords, dim)?;
        let selection = self.selector.select(&pool, k, &mut self.rng)?;
        self.state = ProcessState {
            t: self.state.t + 1,
            pool,
            selection,
        };
        Ok(describe(&self.state, Some(&old_core)))
    }
}

fn describe(state: &ProcessState, old_core: Option<&PointConfiguration>) -> StepRecord {
    let core = state.core();
    let n = state.pool.len();
    let m = core.len();
    let (core_changed, all_samples_rejected, min_sample_core_dist) = match old_core {
        None => (false, false, None),
        Some(old) => {
            let rejected = state.selection.kept.iter().copied().eq(0..m);
            let changed = !rejected && !same_multiset(&core, old);
            let min_d = (m..n)
                .flat_map(|s| old.points().map(move |c| (s, c)))
                .map(|(s, c)| dist_sq(state.pool.point(s), c))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            (changed, rejected, Some(min_d))
        }
    };
    StepRecord {
        t: state.t,
        f: state.selection.core_energy,
        d: geometry::range(&core),
        mu_core: geometry::barycenter(&core),
        core_changed,
        all_samples_rejected,
        min_sample_core_dist,
        tie_count: state.selection.tie_count,
        origin_dist: geometry::distance_from_origin(&core),
    }
}

fn sorted_points(c: &PointConfiguration) -> Vec<&[f64]> {
    let mut v: Vec<&[f64]> = c.points().collect();
    v.sort_by(|x, y| {
        x.iter()
            .zip(y.iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    v
}

fn same_multiset(a: &PointConfiguration, b: &PointConfiguration) -> bool {
    let (sa, sb) = (sorted_points(a), sorted_points(b));
    sa.len() == sb.len()
        && sa.iter().zip(&sb).all(|(x, y)| {
            x.iter()
                .zip(y.iter())
                .all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

/// One step from an explicit state: the pool is the core of `state` plus
/// `K` draws from `sampler`.
pub fn step(
    state: &ProcessState,
    config: &RunConfig,
    sampler: &Sampler,
    rng: &mut SimRng,
) -> Result<(ProcessState, StepRecord)> {
    let old_core = state.core();
    let mut coords = old_core.as_flat().to_vec();
    for _ in 0..config.k {
        coords.extend(sampler.sample(rng));
    }
    let pool = PointConfiguration::from_flat(coords, config.dim)?;
    let selection = CoreSelector::new()
        .with_tie_tolerance(config.tie_tol)
        .select(&pool, config.k, rng)?;
    let next = ProcessState {
        t: state.t + 1,
        pool,
        selection,
    };
    let record = describe(&next, Some(&old_core));
    Ok((next, record))
}

/// Runs until convergence, divergence, or `max_steps`.
pub fn run(config: &RunConfig) -> Result<Trajectory> {
    let (mut sim, first) = Simulation::start(config)?;
    let thresholds = Thresholds::from_config(config, sim.sampler());
    let mut classifier = Classifier::new(thresholds.clone());
    let mut records = Vec::with_capacity(config.max_steps.min(1 << 20) as usize + 1);
    let mut verdict = classifier.observe(&first);
    records.push(first);
    while verdict.is_none() {
        let rec = sim.step()?;
        verdict = classifier.observe(&rec);
        records.push(rec);
    }
    Ok(Trajectory {
        config: config.clone(),
        records,
        final_core: sim.state().core().to_points(),
        outcome: verdict.expect("loop exits with a verdict"),
        thresholds,
        initial_support_unchecked: config.initial_points.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;

    fn split_config(k: usize, max_steps: u64) -> RunConfig {
        RunConfig::new(5, k, DistributionSpec::gaussian(0.0, 1.0, 1), 7, max_steps)
            .with_initial_points([-24.0, -19.0, -14.0, 28.0, 29.0].map(|x| vec![x]).to_vec())
    }

    #[test]
    fn explicit_initial_points_are_used_verbatim() {
        let cfg = split_config(3, 0);
        let sampler = make_sampler(&cfg.dist).unwrap();
        let mut rng = rng::stream(1, 0);
        let pool = init_state(&cfg, &sampler, &mut rng).unwrap();
        assert_eq!(pool.as_flat(), &[-24.0, -19.0, -14.0, 28.0, 29.0]);
        let (sim, rec) = Simulation::start(&cfg).unwrap();
        assert_eq!(sim.state().selection.kept, vec![3, 4]);
        assert!((rec.f - 0.5).abs() < 1e-12);
        assert_eq!(rec.mu_core, vec![28.5]);
    }

    #[test]
    fn bad_initial_points() {
        let cfg = split_config(1, 0).with_initial_points(vec![vec![0.0, 1.0]; 5]);
        assert!(matches!(Simulation::start(&cfg), Err(Error::BadInitial(_))));
        let cfg = split_config(1, 0).with_initial_points(vec![vec![0.0]; 4]);
        assert!(matches!(Simulation::start(&cfg), Err(Error::BadInitial(_))));
    }

    #[test]
    fn random_initial_points_lie_in_support() {
        let cfg = RunConfig::new(5, 1, DistributionSpec::bernoulli(0.5), 3, 0);
        let sampler = make_sampler(&cfg.dist).unwrap();
        let mut rng = rng::stream(cfg.seed, 0);
        let pool = init_state(&cfg, &sampler, &mut rng).unwrap();
        assert_eq!(pool.len(), 5);
        assert!(pool.as_flat().iter().all(|&x| x == 0.0 || x == 1.0));

        let cfg = RunConfig::new(8, 2, DistributionSpec::uniform_cube(3), 3, 0);
        let sampler = make_sampler(&cfg.dist).unwrap();
        let pool = init_state(&cfg, &sampler, &mut rng).unwrap();
        assert_eq!((pool.len(), pool.dim()), (8, 3));
        assert!(pool.as_flat().iter().all(|x| (0.0..1.0).contains(x)));
    }

    #[test]
    fn invalid_configs() {
        let base = RunConfig::new(5, 1, DistributionSpec::uniform_cube(1), 0, 10);
        let mut c = base.clone();
        c.k = 4;
        assert_eq!(c.validate(), Err(Error::InvalidK { n: 5, k: 4 }));
        let mut c = base.clone();
        c.n = 2;
        c.k = 1;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.dim = 2;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.tol_f = 0.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.oscillation_band = Some((1.0, 0.0));
        assert!(c.validate().is_err());
    }

    #[test]
    fn distant_sample_is_rejected() {
        // core (0, 0.1, 0.2), N = 4, K = 1: threshold 0.2 * sqrt(2) ~ 0.283
        let cfg = RunConfig::new(4, 1, DistributionSpec::point_mass(vec![10.0]), 1, 1)
            .with_initial_points(vec![vec![0.0], vec![0.1], vec![0.2], vec![50.0]]);
        let (sim, rec0) = Simulation::start(&cfg).unwrap();
        assert_eq!(sim.state().selection.kept, vec![0, 1, 2]);
        assert!((rec0.d - 0.2).abs() < 1e-15);
        let mut rng = rng::stream(1, 0);
        let (next, rec) = step(sim.state(), &cfg, sim.sampler(), &mut rng).unwrap();
        assert_eq!(next.pool.as_flat(), &[0.0, 0.1, 0.2, 10.0]);
        assert_eq!(next.selection.removed, vec![3]);
        assert!(rec.all_samples_rejected);
        assert!(!rec.core_changed);
        assert!((rec.min_sample_core_dist.unwrap() - 9.8).abs() < 1e-12);
        assert!(rec.min_sample_core_dist.unwrap() > rec0.d * 2f64.sqrt());
    }

    #[test]
    fn identical_pool_stays_at_zero_energy() {
        let cfg = RunConfig::new(4, 2, DistributionSpec::point_mass(vec![2.0, 2.0]), 1, 20)
            .with_initial_points(vec![vec![2.0, 2.0]; 4]);
        let traj = run(&cfg).unwrap();
        assert!(traj.records.iter().all(|r| r.f == 0.0 && r.d == 0.0));
        assert!(traj.records.iter().all(|r| !r.core_changed));
        // 2K = N: no absorption shortcut, runs the full budget
        assert_eq!(traj.records.len(), 21);
    }

    #[test]
    fn degenerate_start_converges_immediately() {
        let cfg = RunConfig::new(5, 1, DistributionSpec::uniform_cube(2), 1, 1000)
            .with_initial_points(vec![vec![0.3, 0.7]; 5]);
        let traj = run(&cfg).unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.outcome.kind, OutcomeKind::ConvergedToPoint);
        assert_eq!(traj.outcome.phi, Some(vec![0.3, 0.7]));
        assert_eq!(traj.outcome.evidence.steps, 0);
        assert!(traj.initial_support_unchecked);
    }

    #[test]
    fn split_cluster_first_step() {
        let traj = run(&split_config(3, 1)).unwrap();
        assert_eq!(traj.records[0].mu_core, vec![28.5]);
        assert!((traj.records[0].f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn runs_are_reproducible() {
        let mut cfg = RunConfig::new(6, 2, DistributionSpec::cauchy(0.0, 1.0), 99, 2000);
        cfg.replica = 3;
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.replica = 4;
        assert_ne!(run(&cfg).unwrap().records, a.records);
    }

    #[test]
    fn simulation_and_free_step_agree() {
        let cfg = RunConfig::new(6, 2, DistributionSpec::gaussian(0.0, 1.0, 2), 5, 50);
        let (mut sim, _) = Simulation::start(&cfg).unwrap();
        let mut rng = sim.rng.clone();
        let mut state = sim.state().clone();
        for _ in 0..50 {
            let a = sim.step().unwrap();
            let (next, b) =
                step(&state, &cfg, &make_sampler(&cfg.dist).unwrap(), &mut rng).unwrap();
            assert_eq!(a, b);
            state = next;
        }
    }

    #[test]
    fn crossing_counter_hysteresis() {
        let mut c = CrossingCounter::new(0.25, 0.75);
        for x in [0.5, 0.0, 0.3, 0.74, 0.2, 0.8, 0.76, 0.5, 0.25, 1.0, 0.0] {
            c.observe(x);
        }
        // 0.0 -> 0.8, 0.8 -> 0.25, 0.25 -> 1.0, 1.0 -> 0.0
        assert_eq!(c.count(), 4);
        let mut mono = CrossingCounter::new(0.25, 0.75);
        (0..100).for_each(|i| mono.observe(f64::from(i) / 100.0));
        assert_eq!(mono.count(), 1);
    }

    fn rec(t: u64, f: f64, mu: f64, origin: f64) -> StepRecord {
        StepRecord {
            t,
            f,
            d: (2.0 * f).sqrt(),
            mu_core: vec![mu],
            core_changed: false,
            all_samples_rejected: true,
            min_sample_core_dist: None,
            tie_count: 1,
            origin_dist: origin,
        }
    }

    fn thresholds() -> Thresholds {
        Thresholds {
            tol_f: 1e-12,
            move_window: 10,
            tol_move: 1e-9,
            diverge_radius: 1e6,
            band: (0.25, 0.75),
            min_crossings: 10,
            max_steps: 100,
            stable_regime: true,
        }
    }

    #[test]
    fn classify_examples() {
        let th = thresholds();
        let still: Vec<_> = (0..=20).map(|t| rec(t, 1e-14, 0.4, 0.4)).collect();
        let out = classify(&still, &th).unwrap();
        assert_eq!(out.kind, OutcomeKind::ConvergedToPoint);
        assert_eq!(out.phi, Some(vec![0.4]));
        assert_eq!(out.evidence.steps, 10);

        let away: Vec<_> = (0..=20)
            .map(|t| rec(t, 1.0, 1e5 * t as f64, 1e5 * t as f64))
            .collect();
        let out = classify(&away, &th).unwrap();
        assert_eq!(out.kind, OutcomeKind::Diverged);
        assert!(out.phi.is_none());

        let flips: Vec<_> = (0..=100)
            .map(|t| rec(t, 0.0, (t % 2) as f64, 0.0))
            .collect();
        let mut th_flip = th.clone();
        th_flip.stable_regime = false;
        let out = classify(&flips, &th_flip).unwrap();
        assert_eq!(out.kind, OutcomeKind::OscillatingCore);
        assert_eq!(out.evidence.crossings, 100);

        let slow: Vec<_> = (0..=100)
            .map(|t| rec(t, 1.0 / (t + 1) as f64, 0.5, 0.5))
            .collect();
        assert_eq!(classify(&slow, &th).unwrap().kind, OutcomeKind::Undecided);
        assert!(classify(&[], &th).is_err());
    }

    #[test]
    fn classify_agrees_with_run() {
        for seed in 0..5 {
            let cfg = RunConfig::new(5, 1, DistributionSpec::cantor(30), seed, 3000);
            let traj = run(&cfg).unwrap();
            assert_eq!(
                classify(&traj.records, &traj.thresholds).unwrap(),
                traj.outcome
            );
        }
    }

    #[test]
    fn default_bands() {
        let bern = DistributionSpec::bernoulli(0.5);
        let s = make_sampler(&bern).unwrap();
        assert_eq!(default_band(&bern, &s), (0.25, 0.75));
        let cauchy = DistributionSpec::cauchy(0.0, 1.0);
        let (a, b) = default_band(&cauchy, &make_sampler(&cauchy).unwrap());
        assert!((a + 1.0).abs() < 0.05 && (b - 1.0).abs() < 0.05);
        let atom = DistributionSpec::point_mass(vec![3.0]);
        assert_eq!(
            default_band(&atom, &make_sampler(&atom).unwrap()),
            (2.5, 3.5)
        );
    }
}
