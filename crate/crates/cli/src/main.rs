mod analyze;
mod anneal;
mod config;
mod oracle;
mod output;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncommit: ",
    env!("SQA_BUILD_COMMIT"),
    "\ntarget: ",
    env!("SQA_BUILD_TARGET"),
    "\nprofile: ",
    env!("SQA_BUILD_PROFILE"),
);

#[derive(Parser, Debug)]
#[command(name = "sqa-lab", version, long_version = LONG_VERSION, about = "Simulated quantum annealing on Hamming-symmetric costs")]
pub struct Cli {
    /// Worker threads (overrides SQA_THREADS; default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Zero every wall-clock field so reports are byte-identical across runs.
    #[arg(long, global = true)]
    no_timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Path-integral SQA along the annealing schedule.
    Sqa {
        #[command(subcommand)]
        action: anneal::SqaAction,
    },
    /// Classical simulated annealing baseline.
    Sa {
        #[command(subcommand)]
        action: anneal::SaAction,
    },
    /// Exact gaps and weight marginals on an s grid.
    Oracle(oracle::OracleArgs),
    /// Canonical-path and comparison analysis of explicit chains.
    Analyze(analyze::AnalyzeArgs),
    /// SA/SQA separation table or mixing-time scan from a JSON config.
    Sweep(sweep::SweepArgs),
}

/// Flags shared by every subcommand that writes a report.
#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<output::Format>,
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("SQA_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(v.trim().parse().with_context(|| format!("SQA_THREADS={v:?}"))?),
            _ => None,
        },
    };
    if let Some(t) = threads {
        anyhow::ensure!(t >= 1, "invalid parameter `threads`: must be >= 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    let timing = !cli.no_timing;
    match cli.command {
        Command::Sqa { action } => anneal::run_sqa(action, timing),
        Command::Sa { action } => anneal::run_sa(action, timing),
        Command::Oracle(args) => oracle::run(args),
        Command::Analyze(args) => analyze::run(args),
        Command::Sweep(args) => sweep::run(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // downstream closed early, e.g. `| head`
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
                    || c.downcast_ref::<csv::Error>().is_some_and(|ce| {
                        matches!(ce.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe)
                    })
                    || c.downcast_ref::<serde_json::Error>().is_some_and(|je| je.io_error_kind() == Some(std::io::ErrorKind::BrokenPipe))
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
