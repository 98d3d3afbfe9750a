//! `cultura`: route culturally sensitive questions to a committee of
//! culturally specialized expert agents and score the results.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Overrides;

#[derive(Parser)]
#[command(
    name = "cultura",
    version,
    about = "Cultural expert committee runner: single runs, batch experiments, and baseline comparison"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one query through the pipeline (or the baseline with --mode).
    Run {
        /// The question to answer.
        #[arg(long)]
        query: String,
        /// Profile to answer for; defaults to the first profile.
        #[arg(long = "profile-id")]
        profile_id: Option<String>,
    },
    /// Run every query in a file and write per-run reports plus a batch
    /// summary with correlations.
    Batch {
        /// One query per line; optional tab-separated profile_id override.
        #[arg(long = "queries-file")]
        queries_file: PathBuf,
        /// Default profile for lines without an override; round-robin
        /// otherwise.
        #[arg(long = "profile-id")]
        profile_id: Option<String>,
    },
    /// Run pipeline and baseline per query and emit a side-by-side
    /// comparison report.
    Compare {
        #[arg(long = "queries-file")]
        queries_file: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, commands::CliError> {
    let resolved = config::resolve(&cli.overrides)?;
    let runtime = commands::prepare(&resolved)?;
    match &cli.command {
        Command::Run { query, profile_id } => {
            commands::cmd_run(&runtime, query, profile_id.as_deref())?;
            Ok(0)
        }
        Command::Batch {
            queries_file,
            profile_id,
        } => {
            let code = commands::cmd_batch(&runtime, queries_file, profile_id.as_deref())?;
            Ok(code as u8)
        }
        Command::Compare { queries_file } => {
            let code = commands::cmd_compare(&runtime, queries_file)?;
            Ok(code as u8)
        }
    }
}
