use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;

use config::ConfigFile;

#[derive(Parser)]
#[command(name = "acorn", version, about = "Generate workloads, build, search and benchmark ACORN indices")]
struct Cli {
    /// JSON settings keyed by subcommand (or a manifest.json); flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset, a workload and its ground truth.
    Gen(config::GenArgs),
    /// Build an index over a dataset.
    Build(config::BuildArgs),
    /// Run a workload against an index.
    Search(config::SearchArgs),
    /// Run a workload with a baseline method.
    Baseline(config::BaselineArgs),
    /// Sweep efs for several methods and report recall, QPS and graph quality.
    Bench(config::BenchArgs),
    /// Print an index header and per-level statistics.
    Inspect(config::InspectArgs),
}

/// `ACORN_THREADS` caps every worker pool.
fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("ACORN_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("ACORN_THREADS={v:?} is not a thread count"))?;
            anyhow::ensure!(n > 0, "ACORN_THREADS must be positive");
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            Ok(Some(n))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cap = thread_cap()?;
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::Gen(a) => commands::gen(a, &file),
        Command::Build(a) => commands::build(a, &file),
        Command::Search(a) => commands::search(a, &file),
        Command::Baseline(a) => commands::baseline(a, &file),
        Command::Bench(a) => commands::bench(a, &file, cap),
        Command::Inspect(a) => commands::inspect(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
