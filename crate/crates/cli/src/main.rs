//! `darkfringe`: run interferometer scenarios described in a TOML file and
//! write the results as CSV.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "darkfringe", version, about = "Dark-fringe nuclear-resonance interferometer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` of the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gated and reference spectra versus detuning.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Intensities behind the analyzer versus time.
    Time {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate control cycles: per-bunch spectra, counts and enhancement.
    Cycle {
        #[command(flatten)]
        common: Common,
        /// Seed of the photon event sampler.
        #[arg(long)]
        seed: u64,
        /// Number of control cycles; overrides `cycle.n_cycles`.
        #[arg(long)]
        cycles: Option<u64>,
    },
    /// Fit a model to a measured histogram.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Histogram CSV with columns bunch_index,t_ns,counts.
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Invalid or inconsistent configuration (exit code 2).
    Config(String),
    /// Failure while running (exit code 3).
    Runtime(String),
}

impl From<darkfringe::Error> for CliError {
    fn from(e: darkfringe::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, scenario) = match &cli.command {
        Command::Spectrum { common }
        | Command::Time { common }
        | Command::Cycle { common, .. }
        | Command::Fit { common, .. } => (common, config::Scenario::load(&common.config)?),
    };
    let out = common.out.clone().unwrap_or_else(|| scenario.raw.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    match cli.command {
        Command::Spectrum { .. } => commands::spectrum(&scenario, &out),
        Command::Time { .. } => commands::time(&scenario, &out),
        Command::Cycle { seed, cycles, .. } => commands::cycle(&scenario, &out, seed, cycles),
        Command::Fit { data, .. } => commands::fit(&scenario, &out, &data),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
