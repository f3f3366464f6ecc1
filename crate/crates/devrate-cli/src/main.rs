//! Command-line front end for the `devrate` library.
//!
//! Each subcommand reads one JSON config file and writes CSV/JSON artifacts
//! into the output directory; flags only choose that directory, override the
//! seed and set verbosity, so a run is fully described by a diffable config.
//! Exit codes: 0 on success with artifacts written, 1 on configuration or
//! input errors, 2 on numeric failure. All diagnostics go to standard error
//! as single-line JSON records. The environment variable `DEVRATE_THREADS`
//! caps the worker count of the Monte Carlo harness; orchestration itself is
//! single-threaded.

mod commands;
mod config;
mod output;

use std::env;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use devrate::devlab::ExperimentConfig;
use devrate::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "devrate",
    version,
    about = "Kernel regression deviation rates: evaluate rate functions and run Monte Carlo experiments from JSON configs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory artifacts are written into.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Replaces the seed from the config file (Monte Carlo commands only).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Emit a progress record per written artifact.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Regression rate J along a 1-D slice of targets through r(x).
    Rate { config: PathBuf },
    /// Moderate-deviation quadratic rate G on a list of targets.
    Mdp { config: PathBuf },
    /// Finite-n cumulant against its limit across sample sizes.
    Lambda { config: PathBuf },
    /// Monte Carlo experiments: deviation curves, variance, linearization.
    Simulate { config: PathBuf },
    /// Moment checks for a claimed kernel order.
    VerifyKernel { config: PathBuf },
    /// Zero-target condition check for the rate function.
    #[command(name = "condition-c")]
    ConditionC { config: PathBuf },
    /// Smoothing bias across a bandwidth schedule.
    Bias { config: PathBuf },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            let (kind, message, code) = match e {
                Error::Config(m) => ("config", m, 1),
                Error::Input(m) => ("input", m, 1),
                Error::Numeric(m) => ("numeric", m, 2),
            };
            diag(&json!({ "error": kind, "message": message }));
            ExitCode::from(code)
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return Ok(ExitCode::SUCCESS);
        }
        Err(e) => return Err(Error::Config(e.to_string())),
    };
    configure_threads()?;
    let out = output::OutDir::new(&cli.out)?;

    let mut seed_used = false;
    let paths = match &cli.command {
        Command::Rate { config } => commands::rate(&config::load(config)?, &out)?,
        Command::Mdp { config } => commands::mdp(&config::load(config)?, &out)?,
        Command::Lambda { config } => commands::lambda(&config::load(config)?, &out)?,
        Command::Simulate { config } => {
            let mut cfg: ExperimentConfig = config::load(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            seed_used = true;
            commands::simulate(&cfg, &out)?
        }
        Command::VerifyKernel { config } => commands::verify_kernel(&config::load(config)?, &out)?,
        Command::ConditionC { config } => commands::condition_c(&config::load(config)?, &out)?,
        Command::Bias { config } => commands::bias(&config::load(config)?, &out)?,
    };

    if cli.seed.is_some() && !seed_used {
        diag(&json!({ "note": "seed override ignored: this command is deterministic" }));
    }
    if cli.verbose {
        for path in &paths {
            diag(&json!({ "note": "wrote", "path": path.display().to_string() }));
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Applies the `DEVRATE_THREADS` cap to the global worker pool before any
/// parallel work starts.
fn configure_threads() -> Result<()> {
    match env::var("DEVRATE_THREADS") {
        Ok(raw) => {
            let n: usize = raw.parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
                Error::Config(format!(
                    "DEVRATE_THREADS must be a positive integer, got {raw:?}"
                ))
            })?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("cannot configure the worker pool: {e}")))
        }
        Err(env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(Error::Config(format!(
            "DEVRATE_THREADS is not valid unicode: {e}"
        ))),
    }
}

/// Single-line JSON diagnostic on standard error.
fn diag(record: &serde_json::Value) {
    eprintln!("{record}");
}
