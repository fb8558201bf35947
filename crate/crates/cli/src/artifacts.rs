//! On-disk formats: trajectory CSV, violation CSV and JSON documents.
//!
//! Floats are written in shortest round-trip form, so files are stable
//! across identical invocations and parse back to the same bits.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use jante::diagnostics::{self, Invariant, InvariantReport, Violation};
use jante::engine::{Outcome, RunConfig, StepRecord, Thresholds, Trajectory};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const RUN_SUMMARY_FILE: &str = "summary.json";
pub const VIOLATIONS_FILE: &str = "violations.csv";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn trajectory_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "F", "D"].map(String::from).to_vec();
    h.extend((0..dim).map(|i| format!("mu_{i}")));
    h.extend(["core_changed", "rejected", "tie_count", "min_sample_dist"].map(String::from));
    h
}

/// Writes every `thin`-th record plus the last one.
pub fn write_trajectory(path: &Path, records: &[StepRecord], dim: usize, thin: u64) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(trajectory_header(dim))?;
    let last = records.len().saturating_sub(1);
    for (i, r) in records.iter().enumerate() {
        if r.t % thin != 0 && i != last {
            continue;
        }
        let mut row = vec![r.t.to_string(), fmt_f64(r.f), fmt_f64(r.d)];
        row.extend(r.mu_core.iter().map(|&x| fmt_f64(x)));
        row.push(r.core_changed.to_string());
        row.push(r.all_samples_rejected.to_string());
        row.push(r.tie_count.to_string());
        row.push(r.min_sample_core_dist.map(fmt_f64).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV back. The core's distance from the origin is not
/// stored and comes back as zero.
pub fn read_trajectory(path: &Path) -> Result<Vec<StepRecord>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let dim = header.iter().filter(|h| h.starts_with("mu_")).count();
    if dim == 0 || header != trajectory_header(dim) {
        bail!("{}: unexpected header {:?}", path.display(), header);
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let ctx = || format!("{} row {}", path.display(), line + 1);
        let f = |i: usize| -> Result<f64> { row[i].parse::<f64>().with_context(ctx) };
        let b = |i: usize| -> Result<bool> { row[i].parse::<bool>().with_context(ctx) };
        let base = 3 + dim;
        out.push(StepRecord {
            t: row[0].parse().with_context(ctx)?,
            f: f(1)?,
            d: f(2)?,
            mu_core: (0..dim).map(|i| f(3 + i)).collect::<Result<_>>()?,
            core_changed: b(base)?,
            all_samples_rejected: b(base + 1)?,
            tie_count: row[base + 2].parse().with_context(ctx)?,
            min_sample_core_dist: match &row[base + 3] {
                "" => None,
                s => Some(s.parse().with_context(ctx)?),
            },
            origin_dist: 0.0,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantCounts {
    pub violation_counts: std::collections::BTreeMap<String, u64>,
    pub rejection_triggers: Option<u64>,
}

impl From<&InvariantReport> for InvariantCounts {
    fn from(r: &InvariantReport) -> Self {
        Self {
            violation_counts: Invariant::ALL
                .iter()
                .map(|&i| (i.name().to_string(), r.count(i)))
                .collect(),
            rejection_triggers: r.rejection_triggers,
        }
    }
}

/// The `summary.json` beside each trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDocument {
    pub config: RunConfig,
    /// `2K < N`.
    pub stable_regime: bool,
    pub initial_support_unchecked: bool,
    pub thresholds: Thresholds,
    pub outcome: Outcome,
    pub n_records: u64,
    pub thin: u64,
    pub final_core: Vec<Vec<f64>>,
    pub invariants: InvariantCounts,
}

pub fn write_run(dir: &Path, traj: &Trajectory, thin: u64) -> Result<InvariantReport> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let cfg = &traj.config;
    let report = diagnostics::check_all(&traj.records, cfg.n, cfg.k);
    write_trajectory(&dir.join(TRAJECTORY_FILE), &traj.records, cfg.dim, thin)?;
    let doc = RunDocument {
        config: cfg.clone(),
        stable_regime: cfg.stable_regime(),
        initial_support_unchecked: traj.initial_support_unchecked,
        thresholds: traj.thresholds.clone(),
        outcome: traj.outcome.clone(),
        n_records: traj.records.len() as u64,
        thin,
        final_core: traj.final_core.clone(),
        invariants: InvariantCounts::from(&report),
    };
    write_json(&dir.join(RUN_SUMMARY_FILE), &doc)?;
    Ok(report)
}

pub fn write_violations<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (u64, &'a Violation)>,
) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["run_id", "step", "invariant", "lhs", "rhs"])?;
    for (run_id, v) in rows {
        w.write_record([
            run_id.to_string(),
            v.step.to_string(),
            v.invariant.name().to_string(),
            fmt_f64(v.lhs),
            fmt_f64(v.rhs),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Number of data rows in a violations file.
pub fn count_violation_rows(path: &Path) -> Result<u64> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut n = 0;
    for row in rdr.records() {
        row?;
        n += 1;
    }
    Ok(n)
}
