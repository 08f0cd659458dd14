//! `reflector`: command-line entry point for the ray tracer, the FDTD
//! solver, the etch simulator and the photon-statistics analyses.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Threads;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "reflector", version, about = "Photon extraction from diamond parabolic reflectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML run configuration; overrides the preset key by key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named configuration shipped with the tool.
    #[arg(long)]
    preset: Option<String>,
    /// RNG seed; required by stochastic commands unless set in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads: a count or `auto`.
    #[arg(long)]
    threads: Option<Threads>,
    /// Input data file for commands that analyse measurements.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo ray tracing: efficiency per NA and angular histogram.
    SimulateGeo {
        #[command(flatten)]
        common: Common,
        /// Number of launched rays.
        #[arg(long)]
        rays: Option<usize>,
    },
    /// FDTD dipole run: efficiency per wavelength and NA.
    SimulateFdtd {
        #[command(flatten)]
        common: Common,
        /// Displacement sweep, e.g. `--sweep vertical 0:200:50`.
        #[arg(long, num_args = 2, value_names = ["AXIS", "START:STOP:STEP"])]
        sweep: Option<Vec<String>>,
        /// Abort before allocating if the grid needs more memory than this.
        #[arg(long)]
        memory_budget_mb: Option<f64>,
    },
    /// Gray-scale process simulation, or a parabola fit of a measured profile.
    Fabsim {
        #[command(flatten)]
        common: Common,
    },
    /// Saturation-curve fit with both background corrections and brightness.
    FitSaturation {
        #[command(flatten)]
        common: Common,
    },
    /// g2(0) from a coincidence histogram.
    AnalyzeG2 {
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic HBT experiment and its g2(0).
    SimulateHbt {
        #[command(flatten)]
        common: Common,
    },
    /// Radiative lifetime from the side-peak shape of a coincidence histogram.
    Lifetime {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(manifest) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
