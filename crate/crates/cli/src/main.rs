//! `lorenc`: generate synthetic models, protect them, verify restoration,
//! run recovery attacks and report metrics.
//!
//! Every command writes a JSON report to stdout (or to `--report`) and
//! progress or diagnostics to stderr. Exit codes: 0 pass, 1 assertion
//! failure, 2 usage, 3 missing artifact, 4 corrupt artifact.

mod commands;
mod error;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{attack, gen, inspect, metrics, protect, verify};

#[derive(Debug, Parser)]
#[command(name = "lorenc", version, about = "Spectral protection for low-rank adapted weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic baseline model (weights and task adapters).
    Gen(gen::Args),
    /// Protect a baseline model, producing a deploy container and a keystore.
    Protect(protect::Args),
    /// Check that deploy + keystore restore the baseline merged weights.
    Verify(verify::Args),
    /// Run a weight-recovery attack and report the W-Error.
    Attack(attack::Args),
    /// Energy, integrity, stealthiness and overhead metrics of a protected model.
    Metrics(metrics::Args),
    /// Summarize a container's manifest and adapter Gram statistics.
    Inspect(inspect::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Gen(args) => gen::run(args, argv),
        Command::Protect(args) => protect::run(args, argv),
        Command::Verify(args) => verify::run(args, argv),
        Command::Attack(args) => attack::run(args, argv),
        Command::Metrics(args) => metrics::run(args, argv),
        Command::Inspect(args) => inspect::run(args),
    };
    match result {
        Ok(code) => code.into(),
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code().into()
        }
    }
}
