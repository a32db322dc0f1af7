//! `commqcd`: tradeoff regions, codebooks and Monte Carlo campaigns from a
//! TOML config.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 a solver did not
//! converge, 4 results dominated by censored runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("censoring dominates: {0}")]
    Censored(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Censored(_) => 4,
        }
    }
}

impl From<commqcd::Error> for CliError {
    fn from(e: commqcd::Error) -> Self {
        match e {
            commqcd::Error::RegionInvariant(_) => CliError::NonConvergence(e.to_string()),
            commqcd::Error::AllCensored { .. } => CliError::Censored(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Units {
    Nats,
    Bits,
}

impl Units {
    pub fn name(self) -> &'static str {
        match self {
            Units::Nats => "nats",
            Units::Bits => "bits",
        }
    }

    /// Converts a value computed in nats.
    pub fn from_nats(self, v: f64) -> f64 {
        match self {
            Units::Nats => v,
            Units::Bits => v / std::f64::consts::LN_2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "commqcd", version, about = "Rate-delay regions, CSCC codebooks and detector campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report information quantities in bits instead of nats.
    #[arg(long, global = true)]
    bits: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Rate-delay region as CSV plus a JSON summary.
    Region,
    /// False-alarm, delay and slope-fit campaign.
    Simulate,
    /// Generate a codebook and report its rate and window statistics.
    Codebook,
}

pub struct Context {
    pub config_path: PathBuf,
    pub out: PathBuf,
    pub units: Units,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let config_path = cli.config.ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let mut cfg = config::load(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let ctx = Context { config_path, out: cli.out, units: if cli.bits { Units::Bits } else { Units::Nats } };
    match cli.command {
        Command::Region => commands::region(&cfg, &ctx),
        Command::Simulate => commands::simulate(&cfg, &ctx),
        Command::Codebook => commands::codebook(&cfg, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("commqcd: {e}");
            ExitCode::from(e.code())
        }
    }
}
