//! Batch front end for `ep-core`: point classification, radial and plane
//! scans, phase portraits and analytic-versus-detector cross-validation.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numeric failure,
//! 3 cross-validation suite failure.

pub mod commands;
pub mod config;
pub mod output;
pub mod scan;
pub mod suites;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, Format, Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error")]
    Config(#[from] ConfigError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("suite failure: {0}")]
    Suite(String),
    #[error("cannot write output")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Suite(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ep", version, about = "Smoothness vs blow-up of radial Euler-Poisson characteristics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: output.dir or the working directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Integrator tolerance, overrides policy.tol.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Integration horizon, overrides every regime default.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify one characteristic and compare with applicable closed forms.
    Classify,
    /// Classify every characteristic of a profile on an r-grid.
    ScanR,
    /// Scan two of (F0, G0, u0, v0) and extract the outcome boundary.
    ScanPlane,
    /// Sample trajectories, separatrix, equilibria and direction field.
    PhasePortrait,
    /// Run a cross-validation suite (or `all`).
    Crossval {
        /// Suite id; falls back to crossval.suite in the config.
        suite: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::ScanR => "scan-r",
            Command::ScanPlane => "scan-plane",
            Command::PhasePortrait => "phase-portrait",
            Command::Crossval { .. } => "crossval",
        }
    }
}

/// Paths written and summary lines of a successful run.
#[derive(Debug)]
pub struct RunOutput {
    pub written: Vec<PathBuf>,
    pub summary: Vec<String>,
    /// Names of failed cross-validation suites.
    pub failed_suites: Option<String>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.failed_suites.is_some() {
            3
        } else {
            0
        }
    }
}

fn load(cli: &Cli) -> Result<Option<RunConfig>, ConfigError> {
    cli.config.as_deref().map(RunConfig::load).transpose()
}

fn require(cfg: Option<RunConfig>) -> Result<RunConfig, ConfigError> {
    cfg.ok_or_else(|| ConfigError::Invalid {
        field: "--config".into(),
        message: "this command needs a configuration file".into(),
    })
}

/// Execute a parsed command line.
pub fn execute(cli: &Cli) -> Result<RunOutput, CliError> {
    if cli.jobs == Some(0) {
        return Err(ConfigError::Invalid {
            field: "--jobs".into(),
            message: "must be at least 1".into(),
        }
        .into());
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Numeric(e.to_string()))?;
    pool.install(|| execute_inner(cli))
}

fn execute_inner(cli: &Cli) -> Result<RunOutput, CliError> {
    let cfg = load(cli)?;
    let overrides = Overrides {
        tol: cli.tol,
        horizon: cli.horizon,
    };
    let (report, suite_failed) = match &cli.command {
        Command::Crossval { suite, seed } => {
            let name = suite
                .clone()
                .or_else(|| cfg.as_ref().and_then(|c| c.crossval.as_ref().map(|x| x.suite.clone())))
                .ok_or_else(|| ConfigError::Invalid {
                    field: "suite".into(),
                    message: "name a suite or set crossval.suite".into(),
                })?;
            let seed = seed
                .or_else(|| cfg.as_ref().and_then(|c| c.crossval.as_ref().and_then(|x| x.seed)))
                .unwrap_or(suites::DEFAULT_SEED);
            let reports = suites::run_named(&name, seed)?;
            let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.suite.clone()).collect();
            (suites::crossval_report(&reports), (!failed.is_empty()).then(|| failed.join(", ")))
        }
        cmd => {
            let cfg = require(cfg.clone())?;
            let pol = cfg.policy(&overrides)?;
            let r = match cmd {
                Command::Classify => commands::classify(&cfg, &pol)?,
                Command::ScanR => commands::scan_r(&cfg, &pol)?,
                Command::ScanPlane => commands::scan_plane(&cfg, &pol)?,
                Command::PhasePortrait => commands::phase_portrait(&cfg, &overrides)?,
                Command::Crossval { .. } => unreachable!(),
            };
            (r, None)
        }
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    let format = cli
        .format
        .or_else(|| cfg.as_ref().and_then(|c| c.output.format))
        .unwrap_or(Format::Csv);
    let written = report.write(&dir, format)?;
    Ok(RunOutput {
        written,
        summary: report.summary,
        failed_suites: suite_failed,
    })
}
