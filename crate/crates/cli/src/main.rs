//! `qfilter` — experiments on a continuously observed free quantum particle.
//!
//! Subcommands: `riccati` (width flow, closed form vs RK4), `trajectory`
//! (Gaussian filter along one noise realization), `grid` (full lattice
//! solver), `compare` (grid vs closed form on the same noise), `ensemble`
//! (Monte Carlo statistics), `martingale` (likelihood normalization check).
//! Every run writes CSV artifacts plus a `run_record.txt` manifest with
//! content hashes into the output directory.

mod commands;
mod config;
mod csvio;
mod error;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{apply_seed_override, parse_config, Config};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "qfilter", version, about = "Posterior dynamics of a continuously observed free particle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Plain-text key=value configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir from the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the width Riccati equation and compare with the closed form.
    Riccati(RunArgs),
    /// Propagate the Gaussian posterior along one noise realization.
    Trajectory(RunArgs),
    /// Integrate the nonlinear stochastic wave equation on the lattice.
    Grid(RunArgs),
    /// Run grid and Gaussian filter on the same noise and compare moments.
    Compare(RunArgs),
    /// Monte Carlo ensemble statistics of the Gaussian filter.
    Ensemble(RunArgs),
    /// Mean terminal likelihood of the linear equation under prior noise.
    Martingale(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Riccati(a)
            | Command::Trajectory(a)
            | Command::Grid(a)
            | Command::Compare(a)
            | Command::Ensemble(a)
            | Command::Martingale(a) => a,
        }
    }
}

fn load_config(args: &RunArgs) -> Result<Config, CliError> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    let mut config = parse_config(&text)?;
    let env_seed = std::env::var("QFILTER_SEED").ok();
    apply_seed_override(&mut config, env_seed.as_deref())?;
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = load_config(cli.command.args())?;
    let out = config.output.dir.clone();
    std::fs::create_dir_all(&out)?;
    match &cli.command {
        Command::Riccati(_) => commands::run_riccati(&config, &out),
        Command::Trajectory(_) => commands::run_trajectory(&config, &out),
        Command::Grid(_) => commands::run_grid(&config, &out),
        Command::Compare(_) => commands::run_compare(&config, &out),
        Command::Ensemble(_) => commands::run_ensemble_cmd(&config, &out),
        Command::Martingale(_) => commands::run_martingale(&config, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}] {}", err.code(), err);
            ExitCode::FAILURE
        }
    }
}
