mod commands;
mod config;
mod error;
mod threads;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

/// Anisotropic and crystalline curvature flows by minimizing movements.
#[derive(Parser)]
#[command(name = "crystalflow", version)]
struct Cli {
    /// Output directory; `run` and `converge` default to `out`, `verify` writes nothing without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; overrides CRYSTALFLOW_THREADS and the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a flow or level-set evolution from a JSON config (or a previous report.json).
    Run { config: PathBuf },
    /// Run the acceptance suite, `fast` or `full`.
    Verify { suite: String },
    /// Refine along the config's ladder and fit the convergence rate.
    Converge { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let result = match &cli.command {
        Command::Run { config } => commands::run(config, &out, cli.threads),
        Command::Verify { suite } => commands::verify(suite, cli.out.as_deref()),
        Command::Converge { config } => commands::converge(config, &out, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    eprintln!("{}", e.record());
    ExitCode::from(e.exit_code() as u8)
}
