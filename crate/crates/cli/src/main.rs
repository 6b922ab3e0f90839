//! `sgcd`: batch command-line surface for grammar-constrained
//! sketch-then-refine decoding.
//!
//! Subcommands: `compile` turns a grammar file plus vocabulary into a
//! token-level automaton and reports its size; `run` executes a full
//! sketch-then-refine batch from a TOML config, writing a resumable
//! transcript and an evaluation report; `eval` scores an existing
//! transcript against a gold dataset; `cost` prints the token arithmetic
//! showing why per-token constrained decoding against a remote API is
//! impractical.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error
//! (clap's own argument errors also exit 2). Reports carry no timestamps,
//! so identical inputs and seeds produce byte-identical outputs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Task;

#[derive(Parser)]
#[command(name = "sgcd", version, about = "Grammar-constrained sketch-then-refine decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a grammar and vocabulary into a constraint automaton.
    Compile {
        /// Grammar file (right-linear productions).
        #[arg(long)]
        grammar: PathBuf,
        /// Vocabulary file (`#eos` directive, then one token per line).
        #[arg(long)]
        vocab: PathBuf,
        /// Write the trimmed automaton as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run sketch-then-refine over a dataset per a TOML config.
    Run {
        /// Run configuration; paths inside are relative to this file.
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a transcript against a gold dataset; prints report JSON.
    Eval {
        #[arg(long, value_enum)]
        task: Task,
        /// Transcript JSONL produced by `run`.
        #[arg(long)]
        pred: PathBuf,
        /// Gold dataset JSONL.
        #[arg(long)]
        gold: PathBuf,
        /// Bootstrap seed for confidence intervals.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare iterative remote constrained decoding with one sketch call.
    Cost {
        /// Output length in tokens.
        #[arg(long)]
        n: u64,
        /// Prompt size in tokens.
        #[arg(long)]
        context: u64,
        /// Price per billed input token.
        #[arg(long, default_value_t = 0.0)]
        price_in: f64,
        /// Price per billed output token.
        #[arg(long, default_value_t = 0.0)]
        price_out: f64,
        /// Also report calls under speculation accepting this many
        /// tokens per round trip.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        spec: Option<u64>,
    },
}

/// A command failure carrying the process exit code.
pub struct Failure {
    code: u8,
    error: anyhow::Error,
}

/// Usage or configuration error: exit code 2.
pub fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

/// Runtime failure: exit code 1.
pub fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

pub type CmdResult = Result<(), Failure>;

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Compile { grammar, vocab, out } => {
            commands::cmd_compile(&grammar, &vocab, out.as_deref())
        }
        Command::Run { config } => commands::cmd_run(&config),
        Command::Eval { task, pred, gold, seed } => {
            commands::cmd_eval(task, &pred, &gold, seed)
        }
        Command::Cost { n, context, price_in, price_out, spec } => {
            commands::cmd_cost(n, context, price_in, price_out, spec)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
