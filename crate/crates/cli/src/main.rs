//! `esbid`: storage valuation, bidding and backtesting from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::RunManifest;

/// A bad invocation: unknown flag values, unreadable manifest, empty lists.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "esbid", version, about = "Energy storage valuation, bidding and market backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML file supplying any of the flags below; flags take precedence.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunManifest,
}

impl RunArgs {
    pub fn merged(&self) -> anyhow::Result<RunManifest> {
        let file = match &self.manifest {
            Some(path) => RunManifest::load(path)?,
            None => RunManifest::default(),
        };
        Ok(self.run.clone().or(file))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarketArg {
    Da,
    Rt,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump marginal value surfaces, one file per zone and duration.
    Value {
        #[command(flatten)]
        args: RunArgs,
        /// Forecast tape to value.
        #[arg(long, value_enum, default_value = "da")]
        market: MarketArg,
        /// Write every n-th SoC grid point.
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Write bid schedules and bid duration curves per zone, duration and case.
    Bids {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Backtest the requested cases and write the summary reports.
    Simulate {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Like `simulate`, defaulting to four zones and the full duration list.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Clear a single-bus market scenario and print the dispatch.
    DispatchDemo {
        /// Scenario file (demand, generator and storage lines).
        scenario: PathBuf,
    },
    /// Write seeded synthetic day-ahead and real-time tapes.
    Synth {
        #[command(flatten)]
        args: RunArgs,
        #[command(flatten)]
        wave: commands::WaveArgs,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<esbid_core::Error>() {
        Some(esbid_core::Error::Infeasible(_)) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Value { args, market, stride } => commands::value(&args, market, stride),
        Command::Bids { args } => commands::bids(&args),
        Command::Simulate { args } => commands::simulate(&args, false),
        Command::Sweep { args } => commands::simulate(&args, true),
        Command::DispatchDemo { scenario } => commands::dispatch_demo(&scenario),
        Command::Synth { args, wave } => commands::synth(&args, &wave),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
