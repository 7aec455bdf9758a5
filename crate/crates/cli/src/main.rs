//! `svex`: estimation reports, simulation campaigns, and SATE-vs-PATE
//! diagnostics for survey experiments, from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 internal error. All randomness flows from `--seed`.

mod compare;
mod errors;
mod estimate;
mod input;
mod manifest;
mod simulate;
mod specs;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use errors::{CliError, CliResult};
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "svex", version, about = "Design-based estimation for survey experiments")]
struct Cli {
    /// Worker threads (default: SVEX_THREADS env var, then all cores)
    #[arg(long, global = true, env = "SVEX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate treatment effects from a CSV of (outcome, treatment, weight)
    Estimate(estimate::EstimateArgs),
    /// Run a finite-population Monte Carlo study or correlation sweep
    Simulate(simulate::SimulateArgs),
    /// Compare unweighted and weighted estimates across experiments
    Compare(compare::CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiArg {
    Normal,
    Percentile,
}

/// Write `body` to `path` (plus its manifest sidecar) or to stdout.
pub fn write_output(path: Option<&Path>, body: &str, manifest: &RunManifest) -> CliResult<()> {
    match path {
        Some(path) => {
            std::fs::write(path, body)
                .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
            manifest.write_for(path)
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Estimate(args) => estimate::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Compare(args) => compare::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
