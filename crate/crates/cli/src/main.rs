mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::exit::CliError;

/// Neural graph simulator: data generation, training, evaluation and benchmarks.
///
/// Every subcommand reads an optional JSON config (see schema/config.schema.json),
/// applies `--set KEY=VALUE` overrides and then explicit flags, and writes the
/// resolved config to `<out>/config.json`.
///
/// Exit codes: 0 success, 1 other failure, 2 invalid input or config,
/// 3 missing file, 4 divergence (details in `<out>/diagnostics.json`).
#[derive(Parser, Debug)]
#[command(name = "ngs", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Config override with a dotted key, e.g. `train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory for all outputs.
    #[arg(long, short, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Worker threads; `1` gives bit-stable output.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample instances, simulate them and write a dataset directory.
    Generate(commands::GenerateArgs),
    /// Simulate one instance with the reference solver and optionally a model.
    Simulate(commands::SimulateArgs),
    /// Train a model on a dataset.
    Train(commands::TrainArgs),
    /// Rollout MAE with 95% intervals on fresh instances.
    Evaluate(commands::EvaluateArgs),
    /// Solver versus model NFEV and wall time.
    Bench(commands::BenchArgs),
    /// Lyapunov exponent estimates from perturbed trajectories.
    Lyapunov(commands::LyapunovArgs),
    /// Train over a grid of noise levels and missing fractions.
    Sweep(commands::SweepArgs),
    /// Kuramoto solver error and cost versus interaction threshold.
    Threshold(commands::ThresholdArgs),
    /// Road-network speed forecasting.
    Traffic(commands::TrafficArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Generate(_) => "generate",
            Self::Simulate(_) => "simulate",
            Self::Train(_) => "train",
            Self::Evaluate(_) => "evaluate",
            Self::Bench(_) => "bench",
            Self::Lyapunov(_) => "lyapunov",
            Self::Sweep(_) => "sweep",
            Self::Threshold(_) => "threshold",
            Self::Traffic(_) => "traffic",
        }
    }
}

fn init_logging(c: &Common) {
    let level = match (c.quiet, c.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // Built without reading the environment.
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::invalid(e.to_string()))?;
    }
    let c = &cli.common;
    match &cli.command {
        Command::Generate(a) => commands::generate(c, a),
        Command::Simulate(a) => commands::simulate(c, a),
        Command::Train(a) => commands::train(c, a),
        Command::Evaluate(a) => commands::evaluate(c, a),
        Command::Bench(a) => commands::bench(c, a),
        Command::Lyapunov(a) => commands::lyapunov(c, a),
        Command::Sweep(a) => commands::sweep(c, a),
        Command::Threshold(a) => commands::threshold(c, a),
        Command::Traffic(a) => commands::traffic(c, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli.common);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{}: {e}", cli.command.name());
            if e.code == exit::DIVERGED {
                commands::write_diagnostics(&cli.common.out, cli.command.name(), &e);
            }
            ExitCode::from(e.code)
        }
    }
}
