//! `scatkit` — command-line front end for the scattering toolkit.
//!
//! Subcommands cover the full experiment cycle: `forward` solves the
//! background far fields, `probe` synthesizes single- and pair-probe
//! measurements, `reconstruct` inverts them into Green-function and
//! refractive-index estimates, `sweep` fits error-decay rates over
//! shrinking probe radii, and `noise-study` repeats sweeps under scaled
//! noise and placement shifts.
//!
//! Exit codes: 0 on success, 1 on numerical failure, 2 on configuration
//! errors (including malformed config files and bad command lines).
//! Given the same config and seeds, report bodies are byte-identical;
//! `--no-timestamp` also suppresses the generation timestamp and
//! wall-clock columns, making entire output directories reproducible.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::RunContext;

#[derive(Parser)]
#[command(
    name = "scatkit",
    version,
    about = "Far-field synthesis and probe-pair reconstruction for acoustic scattering"
)]
struct Cli {
    /// Experiment configuration file (JSON; unknown keys are rejected).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "scatkit-out")]
    out: PathBuf,

    /// Size of the worker pool (default: one thread per core).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Override the placement seed(s) from the config's sweep section.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Omit the generation timestamp and wall-clock columns so reruns with
    /// the same config and seeds are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the background medium and write its far-field matrix.
    Forward,
    /// Synthesize far fields for a fixed single/pair probe layout.
    Probe,
    /// Recover Green values and refractive indices from probe data.
    Reconstruct,
    /// Fit error-decay rates over shrinking probe radii.
    Sweep,
    /// Rerun sweeps under radius-scaled noise and placement shifts.
    NoiseStudy,
}

/// Failure classes behind the exit-code contract.
enum CliFailure {
    /// A numerical routine broke down on valid inputs (exit 1).
    Numerical(String),
    /// The inputs themselves are unusable (exit 2).
    Config(String),
}

impl From<scatkit::ScatError> for CliFailure {
    fn from(err: scatkit::ScatError) -> Self {
        if err.is_configuration() {
            CliFailure::Config(err.to_string())
        } else {
            CliFailure::Numerical(err.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliFailure::Numerical(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliFailure::Config(message)) => {
            eprintln!("config error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliFailure> {
    let config_path = cli
        .config
        .ok_or_else(|| CliFailure::Config("--config <PATH> is required".into()))?;
    let cfg = config::load_config(&config_path).map_err(CliFailure::Config)?;

    if let Some(threads) = cli.threads {
        // The pool can only be sized once per process; a second attempt
        // keeps the existing pool, which is the sensible fallback.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliFailure::Config(format!("{}: {e}", cli.out.display())))?;

    let ctx = RunContext {
        out: cli.out,
        no_timestamp: cli.no_timestamp,
        threads: cli.threads,
        seed_override: cli.seed,
        config_path: config_path.display().to_string(),
    };

    match cli.command {
        Command::Forward => commands::cmd_forward(&cfg, &ctx)?,
        Command::Probe => commands::cmd_probe(&cfg, &ctx)?,
        Command::Reconstruct => commands::cmd_reconstruct(&cfg, &ctx)?,
        Command::Sweep => commands::cmd_sweep(&cfg, &ctx)?,
        Command::NoiseStudy => commands::cmd_noise_study(&cfg, &ctx)?,
    }
    Ok(())
}
