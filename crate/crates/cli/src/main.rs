//! `noisecalc` command-line driver.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 1 output I/O failure. Diagnostics go to stderr; stdout carries a single
//! summary line.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use config::{Format, RunConfig};
use output::OutDir;

#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<noisecalc::Error> for Failure {
    fn from(e: noisecalc::Error) -> Self {
        use noisecalc::Error as E;
        match e {
            E::InvalidInput(_) | E::GridMismatch(_) | E::DimensionMismatch { .. } | E::Expr(_) => Failure::config(e.to_string()),
            _ => Failure::numeric(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "noisecalc", version, about = "Stochastic calculus laboratory for Itô, Stratonovich and HK noise")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Time step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence tables of Riemann–Stieltjes sums on a refined Brownian path.
    Integrate,
    /// Itô form of a model's drift sampled on a grid.
    Convert,
    /// Monte Carlo ensemble summary and terminal histogram.
    Simulate,
    /// Stationary density with reflecting ends.
    Stationary,
    /// Fokker–Planck evolution and relative-entropy trace.
    Fpe,
    /// Rest-start and hitting-time comparison of the three interpretations.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Langevin1,
    Langevin2,
    Relativistic,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::Langevin1 => "langevin1",
            Experiment::Langevin2 => "langevin2",
            Experiment::Relativistic => "relativistic",
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(dir) = &cli.out {
        cfg.outputs.dir = dir.clone();
    }
    if let Some(f) = cli.format {
        cfg.outputs.format = f;
    }
    if let Some(n) = cli.paths {
        cfg.run.n_paths = n;
        cfg.experiment.rest_start.n_seeds = n;
        cfg.experiment.hitting.n_paths = n;
    }
    if let Some(dt) = cli.dt {
        cfg.run.dt = dt;
        cfg.fpe.dt = Some(dt);
        cfg.experiment.rest_start.dt = dt;
        cfg.experiment.hitting.dt = dt;
    }
    Ok(cfg)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("NOISECALC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| Failure::config(format!("NOISECALC_THREADS must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<String, Failure> {
    configure_threads()?;
    let cfg = load(cli)?;
    let mut out = OutDir::create(&cfg.outputs.dir)?;
    match &cli.command {
        Command::Integrate => commands::integrate(&cfg, &mut out),
        Command::Convert => commands::convert_drift(&cfg, &mut out),
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Stationary => commands::stationary(&cfg, &mut out),
        Command::Fpe => commands::fpe(&cfg, &mut out),
        Command::Experiment { name } => commands::experiment(name.name(), &cfg, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
