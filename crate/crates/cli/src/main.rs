//! `pair`: generate TSP instances, run the evolutionary solver and compare
//! selection strategies.
//!
//! Exit codes: 0 success, 2 configuration, 3 model transport, 4 selection
//! strategy, 5 I/O.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pair_core::engine::StrategyKind;
use pair_core::llm::ExecutionMode;
use pair_core::tsp::Family;

#[derive(Debug, Parser)]
#[command(name = "pair", version, about = "Evolutionary TSP with preference-aligned pair selection")]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate instances and solve them exactly.
    Gen(GenArgs),
    /// Run the solver once on one instance.
    Run(RunArgs),
    /// Run a grid of instances and strategies and report on it.
    Compare(CompareArgs),
    /// Rebuild reports from stored run records.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub family: Family,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Seed of the first instance; the k-th uses seed + k.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Side of the square the cities are placed in.
    #[arg(long)]
    pub extent: Option<f64>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub spread: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long)]
    pub mode: Option<ExecutionMode>,
    /// Master seed; each instance's engine seed is derived from it and the instance id.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub population: Option<usize>,
    /// Generation budget, counting the initial population.
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub early_stop: Option<bool>,
    #[arg(long)]
    pub fallback_to_mock: Option<bool>,
    #[arg(long)]
    pub base_temperature: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EndpointArgs {
    /// OpenAI-compatible base URL; the key is read from PAIR_API_KEY.
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_requeries: Option<u32>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    /// Key-value file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Comma-separated, e.g. `pair_mock,random_lmea`.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<StrategyKind>>,
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<Family>>,
    #[arg(long, value_delimiter = ',')]
    pub node_counts: Option<Vec<usize>>,
    /// Instances per family and node count.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Seed of the first instance in each cell; defaults to the master seed.
    #[arg(long)]
    pub instance_seed: Option<u64>,
    #[arg(long)]
    pub runs_per_instance: Option<usize>,
    /// Runs executed concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Gen(a) => commands::cmd_gen(a),
        Command::Run(a) => commands::cmd_run(a),
        Command::Compare(a) => commands::cmd_compare(a),
        Command::Report(a) => commands::cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
