//! `ifbs` — solve, simulate, and check perception-priced planning problems.
//!
//! A model is a finite MDP whose controller pays a fixed price per nat of
//! information about the state. `solve` runs value iteration over paired
//! finite belief sets (each prior backup a small linear program) and writes
//! the value tables, the perception strategy, and the action policy as JSON
//! and CSV artifacts. `simulate` replays a solved policy closed-loop on the
//! underlying MDP. `validate` checks model files; `diagnose` runs the
//! supporting-theory checks (oracle agreement, refinement monotonicity,
//! entropy perturbation bound, a-posteriori error bound).
//!
//! Exit codes: 0 success, 1 semantic failure (invalid model, failed check,
//! no convergence), 2 usage or decoding problems. Identical invocations
//! write byte-identical artifacts; timings go to stdout only.

mod artifacts;
mod run;
mod source;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

/// Failures that end a run, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable files, malformed JSON: exit 2.
    #[error("{0}")]
    Usage(String),
    /// The command ran but its contract failed: exit 1.
    #[error("{0}")]
    Check(String),
}

impl From<ifbs_core::Error> for CliError {
    fn from(err: ifbs_core::Error) -> Self {
        CliError::Check(err.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ifbs",
    about = "Joint perception/action planning with information costs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model file and report every violation.
    Validate(run::ValidateArgs),
    /// Solve a model and write value tables, strategy, and policy artifacts.
    Solve(run::SolveArgs),
    /// Roll out a solved policy closed-loop and write residence/cost data.
    Simulate(run::SimulateArgs),
    /// Run a supporting-theory check; exit 0 only if it passes.
    #[command(subcommand)]
    Diagnose(run::DiagnoseCommand),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate(args) => run::validate(args),
        Command::Solve(args) => run::solve(args),
        Command::Simulate(args) => run::simulate(args),
        Command::Diagnose(command) => run::diagnose(command),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CliError::Check(_) => ExitCode::from(1),
                CliError::Usage(_) => ExitCode::from(2),
            }
        }
    }
}
