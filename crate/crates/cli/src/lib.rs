//! `stare` command-line front end: simulate, select, sweep, calibrate, eval.

mod commands;
mod config;
mod error;
mod io;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_calibrate, cmd_eval, cmd_select, cmd_simulate, cmd_sweep, CalibrateOutput, EvalReport, SelectOutput,
    SweepOutput,
};
pub use config::{CommonArgs, FamilyName, RunConfig};
pub use error::{CliError, CliResult};
pub use io::write_atomic;

#[derive(Debug, Parser)]
#[command(name = "stare", version, about = "Structurally aware model selection for mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a labeled dataset from a scenario.
    Simulate(SimulateArgs),
    /// Fit K = 1..k_max and pick K at a fixed rho.
    Select(DataArgs),
    /// Exact loss curves over rho and the stable-region verdict.
    Sweep(SweepArgs),
    /// Choose rho maximizing the average F-measure over labeled datasets.
    Calibrate(CalibrateArgs),
    /// F-measure of a saved selection against the dataset's labels.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct SimulateArgs {
    /// Built-in scenario name or path to a generator JSON file.
    #[arg(long)]
    pub spec: Option<String>,
    /// Print the fully expanded generator spec and exit.
    #[arg(long)]
    pub print_spec: bool,
    /// List the built-in scenario names.
    #[arg(long)]
    pub list: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of observations.
    #[arg(long)]
    pub n: Option<usize>,
    /// CSV file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct DataArgs {
    /// CSV dataset with columns x0..x{D-1} and an optional `label` column.
    pub data: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct SweepArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Gridded CSV of the curves; defaults to the JSON path with a `.csv` extension.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CalibrateArgs {
    /// Labeled CSV datasets.
    pub data: Vec<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, clap::Args)]
pub struct EvalArgs {
    /// Labeled CSV dataset the selection was run on.
    pub data: PathBuf,
    /// JSON written by `stare select`.
    #[arg(long)]
    pub selection: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Honour `STARE_THREADS` by sizing the global rayon pool.
pub fn init_thread_pool() -> CliResult<()> {
    let Ok(v) = std::env::var("STARE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("STARE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(e.to_string()))
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Select(a) => cmd_select(a, out).map(drop),
        Command::Sweep(a) => cmd_sweep(a, out).map(drop),
        Command::Calibrate(a) => cmd_calibrate(a, out).map(drop),
        Command::Eval(a) => cmd_eval(a, out).map(drop),
    }
}
