//! Invariant monitors, drift and crossing statistics, and batch summaries.
//!
//! The checkers work on record slices so they apply equally to fresh
//! trajectories and to records read back from disk. Checks that compare
//! consecutive times skip pairs whose `t` values are not adjacent, which
//! keeps them sound on thinned output.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    self, CrossingCounter, Evidence, OutcomeKind, RunConfig, StepRecord, Trajectory,
};
use crate::error::{Error, Result};

/// Absolute slack for the monotonicity check.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Relative slack for the range bounds and the rejection trigger.
pub const RELATIVE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Invariant {
    Monotonicity,
    Sandwich,
    StepBound,
    Rejection,
}

impl Invariant {
    pub const ALL: [Invariant; 4] = [
        Invariant::Monotonicity,
        Invariant::Sandwich,
        Invariant::StepBound,
        Invariant::Rejection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Invariant::Monotonicity => "monotonicity",
            Invariant::Sandwich => "sandwich",
            Invariant::StepBound => "step_bound",
            Invariant::Rejection => "rejection",
        }
    }
}

/// One failed inequality `lhs <= rhs` (for rejection: `lhs` is the trigger
/// distance and `rhs` the threshold it exceeded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: u64,
    pub invariant: Invariant,
    pub lhs: f64,
    pub rhs: f64,
}

fn adjacent(records: &[StepRecord]) -> impl Iterator<Item = (&StepRecord, &StepRecord)> {
    records
        .windows(2)
        .map(|w| (&w[0], &w[1]))
        .filter(|(a, b)| b.t == a.t + 1)
}

/// Times `t` with `F(t+1) > F(t) + 1e-9`.
pub fn check_monotone(records: &[StepRecord]) -> Vec<Violation> {
    records
        .windows(2)
        .filter(|w| w[1].f > w[0].f + MONOTONE_SLACK)
        .map(|w| Violation {
            step: w[0].t,
            invariant: Invariant::Monotonicity,
            lhs: w[1].f,
            rhs: w[0].f,
        })
        .collect()
}

/// Per-record range bounds `sqrt(2F/(N-K-1)) <= D <= sqrt(2F)` and, on
/// adjacent records, `D(t+1) <= sqrt(2F(t)) <= D(t) sqrt(N-K-1)`.
pub fn check_sandwich(records: &[StepRecord], n: usize, k: usize) -> Vec<Violation> {
    let m1 = (n - k - 1) as f64;
    let tol = 1.0 + RELATIVE_SLACK;
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, step, invariant, lhs: f64, rhs: f64| {
        if lhs > rhs * tol {
            out.push(Violation {
                step,
                invariant,
                lhs,
                rhs,
            });
        }
    };
    for r in records {
        let s = (2.0 * r.f).sqrt();
        push(
            &mut out,
            r.t,
            Invariant::Sandwich,
            (2.0 * r.f / m1).sqrt(),
            r.d,
        );
        push(&mut out, r.t, Invariant::Sandwich, r.d, s);
    }
    for (a, b) in adjacent(records) {
        let s = (2.0 * a.f).sqrt();
        push(&mut out, b.t, Invariant::StepBound, b.d, s);
        push(&mut out, b.t, Invariant::StepBound, s, a.d * m1.sqrt());
    }
    out.sort_by_key(|v| (v.step, v.invariant));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCheck {
    /// Steps at which every fresh draw was beyond `D(t) sqrt(N-K-1)` of the
    /// previous core.
    pub triggers: u64,
    /// Triggered steps at which the core changed anyway.
    pub violations: Vec<Violation>,
}

/// Monitors the rejection implication on adjacent records. Requires `2K < N`.
pub fn check_rejection(records: &[StepRecord], n: usize, k: usize) -> Result<RejectionCheck> {
    if 2 * k >= n {
        return Err(Error::NotApplicable(format!(
            "rejection needs 2K < N, got N = {n}, K = {k}"
        )));
    }
    let scale = ((n - k - 1) as f64).sqrt() * (1.0 + RELATIVE_SLACK);
    let mut triggers = 0;
    let mut violations = Vec::new();
    for (a, b) in adjacent(records) {
        let Some(dist) = b.min_sample_core_dist else {
            continue;
        };
        let threshold = a.d * scale;
        if dist > threshold {
            triggers += 1;
            if b.core_changed {
                violations.push(Violation {
                    step: b.t,
                    invariant: Invariant::Rejection,
                    lhs: dist,
                    rhs: threshold,
                });
            }
        }
    }
    Ok(RejectionCheck {
        triggers,
        violations,
    })
}

/// All invariant checks of one record sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub violations: Vec<Violation>,
    /// `None` outside the `2K < N` regime.
    pub rejection_triggers: Option<u64>,
}

impl InvariantReport {
    pub fn count(&self, inv: Invariant) -> u64 {
        self.violations
            .iter()
            .filter(|v| v.invariant == inv)
            .count() as u64
    }
}

pub fn check_all(records: &[StepRecord], n: usize, k: usize) -> InvariantReport {
    let mut violations = check_monotone(records);
    violations.extend(check_sandwich(records, n, k));
    let rejection_triggers = match check_rejection(records, n, k) {
        Ok(rc) => {
            violations.extend(rc.violations);
            Some(rc.triggers)
        }
        Err(_) => None,
    };
    violations.sort_by_key(|v| (v.step, v.invariant));
    InvariantReport {
        violations,
        rejection_triggers,
    }
}

/// Mean one-step increment of `h_c = sqrt(F) + c (mu' + max(0, -R_plus))`
/// over every transition of the run. No stopping-time gating is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub c: f64,
    pub r_plus: f64,
    pub n_transitions: u64,
    pub mean_delta_h: f64,
    pub stderr: f64,
    pub window: String,
}

pub fn supermartingale_drift(traj: &Trajectory, c: f64, r_plus: f64) -> Result<DriftReport> {
    let cfg = &traj.config;
    if cfg.dim != 1 || cfg.k != 1 {
        return Err(Error::NotApplicable(format!(
            "drift statistic needs d = 1 and K = 1, got d = {}, K = {}",
            cfg.dim, cfg.k
        )));
    }
    if !(c.is_finite() && c >= 0.0 && r_plus.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bad drift parameters c = {c}, R_plus = {r_plus}"
        )));
    }
    let shift = (-r_plus).max(0.0);
    let h = |r: &StepRecord| r.f.sqrt() + c * (r.mu_core[0] + shift);
    let deltas: Vec<f64> = adjacent(&traj.records).map(|(a, b)| h(b) - h(a)).collect();
    if deltas.is_empty() {
        return Err(Error::NotApplicable("no adjacent records".into()));
    }
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let var = if deltas.len() > 1 {
        deltas.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(DriftReport {
        c,
        r_plus,
        n_transitions: deltas.len() as u64,
        mean_delta_h: mean,
        stderr: (var / n).sqrt(),
        window: "all steps, ungated".into(),
    })
}

/// Completed passages of `mu'` across `(a, b)`; a passage counts once the
/// value leaves the interval on the far side.
pub fn count_crossings(records: &[StepRecord], a: f64, b: f64) -> Result<u64> {
    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidConfig(format!(
            "crossing band ({a}, {b}) needs a < b"
        )));
    }
    let mut counter = CrossingCounter::new(a, b);
    for r in records {
        if r.mu_core.len() != 1 {
            return Err(Error::NotApplicable("crossings need d = 1".into()));
        }
        counter.observe(r.mu_core[0]);
    }
    Ok(counter.count())
}

/// Per-run line of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: u64,
    pub seed: u64,
    pub replica: u64,
    pub outcome: OutcomeKind,
    pub phi: Option<Vec<f64>>,
    pub evidence: Evidence,
    /// Steps at which the core point multiset changed.
    pub core_changes: u64,
    pub violation_counts: BTreeMap<String, u64>,
    pub rejection_triggers: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointQuantiles {
    pub t: u64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub n_runs: u64,
    pub seed: u64,
    /// `2K < N` for the template.
    pub stable_regime: bool,
    pub outcome_counts: BTreeMap<String, u64>,
    /// Quantiles of `F` across runs; a run that stopped early holds its last value.
    pub f_quantiles_at_checkpoints: Vec<CheckpointQuantiles>,
    /// Mean first time `F < tol_f` among runs that got there.
    pub mean_time_to_tol_f: Option<f64>,
    pub runs_reaching_tol_f: u64,
    pub violation_counts: BTreeMap<String, u64>,
    /// Total rejection triggers; `None` outside the `2K < N` regime.
    pub rejection_triggers: Option<u64>,
}

/// Result of [`batch_run`]: the summary, one line per run, and every
/// violation tagged with its run.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub summary: BatchSummary,
    pub runs: Vec<RunSummary>,
    pub violations: Vec<(u64, Violation)>,
}

/// Times 0, 10, 100, ... below `max_steps`, then `max_steps`.
pub fn checkpoints(max_steps: u64) -> Vec<u64> {
    let mut out = vec![0];
    let mut t = 10u64;
    while t < max_steps {
        out.push(t);
        t = t.saturating_mul(10);
    }
    if max_steps > 0 {
        out.push(max_steps);
    }
    out
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct RunDigest {
    summary: RunSummary,
    violations: Vec<Violation>,
    f_at: Vec<f64>,
}

fn digest(run_id: u64, traj: &Trajectory, marks: &[u64]) -> RunDigest {
    let cfg = &traj.config;
    let report = check_all(&traj.records, cfg.n, cfg.k);
    let violation_counts = Invariant::ALL
        .iter()
        .map(|&i| (i.name().to_string(), report.count(i)))
        .collect();
    let mut f_at = Vec::with_capacity(marks.len());
    let mut idx = 0;
    for &m in marks {
        while idx + 1 < traj.records.len() && traj.records[idx + 1].t <= m {
            idx += 1;
        }
        f_at.push(traj.records[idx].f);
    }
    RunDigest {
        summary: RunSummary {
            run_id,
            seed: cfg.seed,
            replica: cfg.replica,
            outcome: traj.outcome.kind,
            phi: traj.outcome.phi.clone(),
            evidence: traj.outcome.evidence.clone(),
            core_changes: traj.records.iter().filter(|r| r.core_changed).count() as u64,
            violation_counts,
            rejection_triggers: report.rejection_triggers,
        },
        violations: report.violations,
        f_at,
    }
}

/// Runs `n_runs` replicas of `template` (replica `i` for run `i`) on `jobs`
/// worker threads and aggregates them.
pub fn batch_run(template: &RunConfig, n_runs: u64, jobs: usize) -> Result<BatchOutput> {
    batch_run_with(template, n_runs, jobs, |_, _| Ok(()))
}

/// As [`batch_run`], handing each finished trajectory to `visit` before it
/// is dropped.
pub fn batch_run_with<F>(
    template: &RunConfig,
    n_runs: u64,
    jobs: usize,
    visit: F,
) -> Result<BatchOutput>
where
    F: Fn(u64, &Trajectory) -> Result<()> + Sync,
{
    if n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
    }
    template.validate()?;
    let marks = checkpoints(template.max_steps);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let digests: Vec<RunDigest> = pool.install(|| {
        (0..n_runs)
            .into_par_iter()
            .map(|i| {
                let mut cfg = template.clone();
                cfg.replica = i;
                let traj = engine::run(&cfg)?;
                visit(i, &traj)?;
                Ok(digest(i, &traj, &marks))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut outcome_counts: BTreeMap<String, u64> = OutcomeKind::ALL
        .iter()
        .map(|k| (k.name().to_string(), 0))
        .collect();
    let mut violation_counts: BTreeMap<String, u64> = Invariant::ALL
        .iter()
        .map(|i| (i.name().to_string(), 0))
        .collect();
    let mut rejection_triggers = template.stable_regime().then_some(0u64);
    let mut reach = Vec::new();
    let mut runs = Vec::with_capacity(digests.len());
    let mut violations = Vec::new();
    let mut columns = vec![Vec::with_capacity(digests.len()); marks.len()];
    for d in digests {
        *outcome_counts
            .entry(d.summary.outcome.name().to_string())
            .or_default() += 1;
        for (name, c) in &d.summary.violation_counts {
            *violation_counts.entry(name.clone()).or_default() += c;
        }
        if let (Some(total), Some(t)) = (rejection_triggers.as_mut(), d.summary.rejection_triggers)
        {
            *total += t;
        }
        if let Some(t) = d.summary.evidence.first_t_below_tol_f {
            reach.push(t as f64);
        }
        for (col, f) in columns.iter_mut().zip(&d.f_at) {
            col.push(*f);
        }
        violations.extend(d.violations.into_iter().map(|v| (d.summary.run_id, v)));
        runs.push(d.summary);
    }
    let f_quantiles_at_checkpoints = marks
        .iter()
        .zip(columns.iter_mut())
        .map(|(&t, col)| {
            col.sort_by(f64::total_cmp);
            CheckpointQuantiles {
                t,
                q05: quantile(col, 0.05),
                q50: quantile(col, 0.5),
                q95: quantile(col, 0.95),
                max: *col.last().expect("at least one run"),
            }
        })
        .collect();
    let summary = BatchSummary {
        n_runs,
        seed: template.seed,
        stable_regime: template.stable_regime(),
        outcome_counts,
        f_quantiles_at_checkpoints,
        mean_time_to_tol_f: (!reach.is_empty())
            .then(|| reach.iter().sum::<f64>() / reach.len() as f64),
        runs_reaching_tol_f: reach.len() as u64,
        violation_counts,
        rejection_triggers,
    };
    Ok(BatchOutput {
        summary,
        runs,
        violations,
    })
}
