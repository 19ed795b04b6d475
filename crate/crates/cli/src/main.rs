//! Command-line entry point for the merging-policy toolkit.
//!
//! Exit codes: 0 success, 1 semantic failure (a verification or training
//! run that completed but did not pass), 2 usage or format errors.

mod artifacts;
mod config;
mod eval;
mod ingest;
mod train;
mod verify;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "mpgmerge",
    version,
    about = "Markov-potential-game toolkit for highway forced-merge driving",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the potential-game identity for a game file or generated game
    Verify(verify::VerifyArgs),
    /// Train the shared policy on the cooperative objective
    Train(train::TrainArgs),
    /// Train the single-agent baseline (ego learns, others car-follow)
    TrainSingle(train::TrainArgs),
    /// Roll a policy pairing over a scenario battery and report metrics
    Eval(eval::EvalArgs),
    /// Turn recorded trajectories into smoothed tracks and replay scenarios
    Ingest(ingest::IngestArgs),
    /// Roll the ego policy against recorded surrounding traffic
    Replay(eval::ReplayArgs),
}

/// Loads `--config` when given, the built-in defaults otherwise.
pub(crate) fn load_config(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify(args) => verify::run(args),
        Command::Train(args) => train::run(args, train::Mode::MultiAgent),
        Command::TrainSingle(args) => train::run(args, train::Mode::SingleAgent),
        Command::Eval(args) => eval::run_eval(args),
        Command::Ingest(args) => ingest::run(args),
        Command::Replay(args) => eval::run_replay(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
