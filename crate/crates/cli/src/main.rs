mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig, OUT_DIR_ENV};
use crate::error::CliResult;

/// Natural disasters index: ingest storm events, build the index, fit the
/// GARCH-NIG model, price options, compute risk budgets and stress tests.
#[derive(Debug, Parser)]
#[command(name = "ndi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write a synthetic storm-event file, CPI table and climate factors.
    Synth,
    /// Aggregate storm events into the semimonthly loss panel.
    Ingest,
    /// Build the index from the loss panel.
    Index,
    /// Fit the GARCH-NIG model to the transformed loss series.
    Fit,
    /// Price index call options under the Esscher measure.
    Price,
    /// Standard-deviation and ETL risk budgets by event type.
    Budget,
    /// Climate-factor stress tests (CoVaR, CoES, CoETL).
    Stress,
    /// Run ingest, index, fit, price, budget and stress in order.
    All,
}

fn run(cli: &Cli) -> CliResult<()> {
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let cfg = RunConfig::resolve(&cli.overrides, env_out)?;
    log::debug!("effective config: {cfg:?}");
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Ingest => commands::cmd_ingest(&cfg),
        Command::Index => commands::cmd_index(&cfg),
        Command::Fit => commands::cmd_fit(&cfg),
        Command::Price => commands::cmd_price(&cfg),
        Command::Budget => commands::cmd_budget(&cfg),
        Command::Stress => commands::cmd_stress(&cfg),
        Command::All => commands::cmd_all(&cfg),
    }
    .map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
