//! `mdi-atten`: build attenuation tables, run turbulence sweeps, optimise
//! decoy settings and profile a single transmittance pair.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing or mismatched
//! artefact, 4 infeasible optimisation, 1 anything else.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::CliError;
use crate::config::Config;

#[derive(Debug, Parser)]
#[command(
    name = "mdi-atten",
    version,
    about = "Dynamic attenuation for MDI QKD over turbulent channels"
)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for artefacts and manifests.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the transmittance grid spacing.
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// Override the optimiser seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the optimal-attenuation lookup table.
    BuildTable,
    /// Average key rates over a sigma² and loss ladder.
    Sweep,
    /// Optimise decoy intensities and probabilities at the design point.
    Optimize,
    /// Rate and error estimates against attenuation at one transmittance pair.
    Profile,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(CliError::config)?,
        None => Config::default(),
    };
    if let Some(step) = cli.grid_step {
        cfg.grid.step = step;
    }
    if let Some(seed) = cli.seed {
        cfg.optimize.seed = seed;
    }
    cfg.validate().map_err(CliError::config)?;

    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| CliError {
        code: 1,
        message: format!("{}: {e}", cli.out_dir.display()),
    })?;

    match cli.command {
        Command::BuildTable => commands::build_table(&cfg, &cli.out_dir),
        Command::Sweep => commands::sweep(&cfg, &cli.out_dir),
        Command::Optimize => commands::optimize(&cfg, &cli.out_dir),
        Command::Profile => commands::profile(&cfg, &cli.out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
