//! `jante` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 verification failure.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jante::error::Error as CoreError;

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Verification(String),
}

impl Failure {
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::InvalidK { .. }
            | CoreError::InvalidConfig(_)
            | CoreError::BadInitial(_)
            | CoreError::InvalidDistribution(_)
            | CoreError::InvalidRegion(_) => Failure::Config(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "jante",
    version,
    about = "Simulate and verify the core-selection process"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set K=2` or `--set dist.params.sd=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory; writes trajectory.csv and summary.json.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Keep every n-th record in the CSV (the last record is always kept).
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        thin: u64,
    },
    /// Run independent replicas and summarise them.
    Batch {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write every run's trajectory under trajectories/.
        #[arg(long)]
        trajectories: bool,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        thin: u64,
    },
    /// Re-check invariants over artifacts written by run or batch.
    Verify {
        dir: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate regularity and tail constants of a law.
    CheckDist {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Run { cfg, out, thin } => {
            let config = config::parse_config(&cfg.config, &cfg.overrides, cfg.seed)?;
            commands::run(&config, &out, thin)
        }
        Command::Batch {
            cfg,
            out,
            runs,
            jobs,
            trajectories,
            thin,
        } => {
            let config = config::parse_config(&cfg.config, &cfg.overrides, cfg.seed)?;
            commands::batch(&config, &out, runs, jobs, trajectories, thin)
        }
        Command::Verify { dir, out } => {
            let report = commands::verify(&dir)?;
            let text = serde_json::to_string_pretty(&report).expect("report serialises");
            println!("{text}");
            if let Some(path) = out {
                artifacts::write_json(&path, &report).map_err(Failure::Runtime)?;
            }
            if report.total_violations > 0 {
                return Err(Failure::Verification(format!(
                    "{} invariant violations",
                    report.total_violations
                )));
            }
            Ok(format!("{} artifacts clean", report.artifacts.len()))
        }
        Command::CheckDist { cfg, out } => {
            let check = commands::load_dist_check(&cfg.config, &cfg.overrides, cfg.seed)?;
            commands::check_dist(&check, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(msg) => {
            eprintln!("{msg}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("config error: {e:#}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Verification(m) => eprintln!("verification failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
