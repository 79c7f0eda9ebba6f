//! Command-line front end: data ingestion, configuration, subcommands and
//! run manifests.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "gidag", version, about = "Causal discovery under unknown general interventions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random ground truth and multi-context data from it.
    Simulate(SimulateArgs),
    /// Run the sampler on a data file and write posterior summaries.
    Fit(FitArgs),
    /// Re-derive summaries of a fit directory and check them against samples.
    Summarize(SummarizeArgs),
    /// Equivalence class of a state, or equivalence of two states.
    Equiv(EquivArgs),
    /// Exhaustive posterior for a tiny problem.
    Exact(ExactArgs),
    /// Compare a fit against the truth it was simulated from.
    ScoreRun(ScoreRunArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub q: usize,
    /// Number of contexts including the observational one.
    #[arg(long)]
    pub k: usize,
    /// Rows per context: one value for all, or a comma-separated list.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    /// Count visits of every distinct state.
    #[arg(long)]
    pub record_states: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Args)]
pub struct EquivArgs {
    /// State JSON file.
    #[arg(long)]
    pub state: PathBuf,
    /// Second state; when given, test equivalence instead of listing the class.
    #[arg(long)]
    pub other: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub max_q: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for `exact.jsonl` and `manifest.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit directory with recorded state counts to compare against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreRunArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
}

/// Runs a parsed command line, writing reports to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn std::io::Write) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a, stdout),
        Command::Fit(a) => commands::fit(&a, stdout),
        Command::Summarize(a) => commands::summarize(&a, stdout),
        Command::Equiv(a) => commands::equiv(&a, stdout),
        Command::Exact(a) => commands::exact(&a, stdout),
        Command::ScoreRun(a) => commands::score_run(&a, stdout),
    }
}
