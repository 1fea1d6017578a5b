//! `score-kit`: datasets, loss evaluation, gradient checks, submodularity
//! verdicts, K-sweeps and training comparisons from the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod io;

use clap::{Parser, Subcommand};

use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "score-kit", version, about = "Submodular combinatorial loss toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic embedding dataset as CSV.
    Gen(commands::GenArgs),
    /// Evaluate one objective on an embedding CSV.
    Eval(commands::EvalArgs),
    /// Compare analytic and finite-difference gradients on a random batch.
    Gradcheck(commands::GradcheckArgs),
    /// Exhaustive diminishing-returns verdicts over random draws.
    Submodcheck(commands::SubmodcheckArgs),
    /// Loss over the K schedule of four-cluster datasets.
    Sweep(commands::SweepArgs),
    /// Two-stage training comparison across objectives.
    Train(commands::TrainArgs),
}

const THREADS_VAR: &str = "SCORE_KIT_THREADS";

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))
}

fn run(cli: Cli) -> CliResult<i32> {
    init_threads()?;
    match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Submodcheck(a) => commands::submodcheck(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Train(a) => commands::train(a),
    }
}

fn main() {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
