//! Subcommand bodies.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use jante::diagnostics::{self, BatchSummary, RunSummary};
use jante::distributions::{
    estimate_regularity, estimate_tail_constant, make_sampler, DistributionSpec, Region,
    RegularityReport, TailReport,
};
use jante::engine::{self, RunConfig};
use jante::rng;

use crate::artifacts::{self, RunDocument, RUN_SUMMARY_FILE, TRAJECTORY_FILE, VIOLATIONS_FILE};
use crate::config;
use crate::Failure;

pub const BATCH_SUMMARY_FILE: &str = "batch_summary.json";
pub const RUNS_FILE: &str = "runs.json";
pub const DIST_REPORT_FILE: &str = "dist_report.json";

fn runtime(e: anyhow::Error) -> Failure {
    Failure::Runtime(e)
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(runtime)
}

pub fn run(config: &RunConfig, out: &Path, thin: u64) -> Result<String, Failure> {
    let traj = engine::run(config).map_err(Failure::from_core)?;
    let report = artifacts::write_run(out, &traj, thin).map_err(runtime)?;
    Ok(format!(
        "{} after {} steps, F = {:?}, {} invariant violations",
        traj.outcome.kind.name(),
        traj.outcome.evidence.steps,
        traj.outcome.evidence.final_f,
        report.violations.len()
    ))
}

#[derive(Serialize)]
struct BatchDocument<'a> {
    config: &'a RunConfig,
    summary: &'a BatchSummary,
}

pub fn batch(
    template: &RunConfig,
    out: &Path,
    runs: u64,
    jobs: usize,
    trajectories: bool,
    thin: u64,
) -> Result<String, Failure> {
    ensure_dir(out)?;
    let traj_root = out.join("trajectories");
    let visit = |i: u64, traj: &engine::Trajectory| -> jante::error::Result<()> {
        if trajectories {
            let dir = traj_root.join(format!("run_{i:06}"));
            artifacts::write_run(&dir, traj, thin)
                .map_err(|e| jante::error::Error::InvalidConfig(format!("{e:#}")))?;
        }
        Ok(())
    };
    let output =
        diagnostics::batch_run_with(template, runs, jobs, visit).map_err(Failure::from_core)?;
    artifacts::write_json(
        &out.join(BATCH_SUMMARY_FILE),
        &BatchDocument {
            config: template,
            summary: &output.summary,
        },
    )
    .map_err(runtime)?;
    artifacts::write_json::<Vec<RunSummary>>(&out.join(RUNS_FILE), &output.runs)
        .map_err(runtime)?;
    artifacts::write_violations(
        &out.join(VIOLATIONS_FILE),
        output.violations.iter().map(|(id, v)| (*id, v)),
    )
    .map_err(runtime)?;
    let counts: Vec<String> = output
        .summary
        .outcome_counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    Ok(format!(
        "{} runs: {}; {} invariant violations",
        runs,
        counts.join(" "),
        output.violations.len()
    ))
}

#[derive(Debug, Serialize)]
pub struct ArtifactCheck {
    pub path: String,
    pub kind: String,
    pub records: Option<u64>,
    pub violations: u64,
    pub rejection_triggers: Option<u64>,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub artifacts: Vec<ArtifactCheck>,
    pub total_violations: u64,
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Re-checks every trajectory under `dir` and counts rows of every
/// violations file.
pub fn verify(dir: &Path) -> Result<VerifyReport, Failure> {
    let mut files = Vec::new();
    collect_files(dir, &mut files).map_err(runtime)?;
    let rel = |p: &Path| p.strip_prefix(dir).unwrap_or(p).display().to_string();
    let mut checks = Vec::new();
    for path in &files {
        match path.file_name().and_then(|n| n.to_str()) {
            Some(TRAJECTORY_FILE) => {
                let summary = path.with_file_name(RUN_SUMMARY_FILE);
                let doc: RunDocument = serde_json::from_str(
                    &fs::read_to_string(&summary)
                        .with_context(|| format!("cannot read {}", summary.display()))
                        .map_err(runtime)?,
                )
                .with_context(|| format!("malformed {}", summary.display()))
                .map_err(runtime)?;
                let records = artifacts::read_trajectory(path).map_err(runtime)?;
                if records.is_empty() {
                    return Err(runtime(anyhow!("{} has no records", path.display())));
                }
                let report = diagnostics::check_all(&records, doc.config.n, doc.config.k);
                checks.push(ArtifactCheck {
                    path: rel(path),
                    kind: "trajectory".into(),
                    records: Some(records.len() as u64),
                    violations: report.violations.len() as u64,
                    rejection_triggers: report.rejection_triggers,
                });
            }
            Some(VIOLATIONS_FILE) => {
                let n = artifacts::count_violation_rows(path).map_err(runtime)?;
                checks.push(ArtifactCheck {
                    path: rel(path),
                    kind: "violations".into(),
                    records: None,
                    violations: n,
                    rejection_triggers: None,
                });
            }
            _ => {}
        }
    }
    if checks.is_empty() {
        return Err(runtime(anyhow!(
            "no {TRAJECTORY_FILE} or {VIOLATIONS_FILE} under {}",
            dir.display()
        )));
    }
    let total_violations = checks.iter().map(|c| c.violations).sum();
    Ok(VerifyReport {
        artifacts: checks,
        total_violations,
    })
}

fn default_regularity_samples() -> usize {
    100_000
}
fn default_tail_samples() -> usize {
    1_000_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityCheck {
    pub center: Vec<f64>,
    pub radius: f64,
    pub delta: f64,
    pub radii: Vec<f64>,
    pub probes: Vec<Vec<f64>>,
    #[serde(default = "default_regularity_samples")]
    pub n_samples: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailCheck {
    pub r_plus: f64,
    pub r_minus: f64,
    pub grid: Vec<(f64, f64)>,
    #[serde(default = "default_tail_samples")]
    pub n_samples: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistCheckConfig {
    pub dist: DistributionSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub regularity: Option<RegularityCheck>,
    #[serde(default)]
    pub tail: Option<TailCheck>,
}

#[derive(Debug, Serialize)]
pub struct DistReport {
    pub dist: DistributionSpec,
    pub seed: u64,
    pub regularity: Option<RegularityReport>,
    pub tail: Option<TailReport>,
}

/// Regularity draws from replica 0 of the seed, tail draws from replica 1.
pub fn check_dist(cfg: &DistCheckConfig, out: &Path) -> Result<String, Failure> {
    if cfg.regularity.is_none() && cfg.tail.is_none() {
        return Err(Failure::Config(anyhow!(
            "check-dist config needs a `regularity` or `tail` section"
        )));
    }
    let sampler = make_sampler(&cfg.dist).map_err(Failure::from_core)?;
    let regularity = match &cfg.regularity {
        Some(r) => {
            let region = Region {
                center: r.center.clone(),
                radius: r.radius,
            };
            let mut g = rng::stream(cfg.seed, 0);
            Some(
                estimate_regularity(
                    &sampler,
                    &region,
                    r.delta,
                    &r.radii,
                    &r.probes,
                    r.n_samples,
                    &mut g,
                )
                .map_err(Failure::from_core)?,
            )
        }
        None => None,
    };
    let tail = match &cfg.tail {
        Some(t) => {
            let mut g = rng::stream(cfg.seed, 1);
            Some(
                estimate_tail_constant(&sampler, t.r_plus, t.r_minus, &t.grid, t.n_samples, &mut g)
                    .map_err(Failure::from_core)?,
            )
        }
        None => None,
    };
    let report = DistReport {
        dist: cfg.dist.clone(),
        seed: cfg.seed,
        regularity,
        tail,
    };
    ensure_dir(out)?;
    artifacts::write_json(&out.join(DIST_REPORT_FILE), &report).map_err(runtime)?;
    let mut parts = Vec::new();
    if let Some(r) = &report.regularity {
        parts.push(format!("sigma_hat = {:?}", r.sigma_hat));
    }
    if let Some(t) = &report.tail {
        parts.push(format!("C_hat = {:?}", t.c_hat));
    }
    Ok(parts.join(", "))
}

pub fn load_dist_check(
    path: &Path,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<DistCheckConfig, Failure> {
    let value = config::with_overrides(config::load_json(path)?, overrides, seed)?;
    config::decode(value, "check-dist config")
}
