//! `tdflio` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdflio::pipeline::PipelineConfig;

mod bench;
mod commands;
mod failure;

use failure::{CliResult, Failure};

/// Cap on grid allocations regardless of the configured budget.
const HOST_BUDGET_CAP: u64 = 8 << 30;

fn config_help() -> String {
    format!(
        "Configuration keys (TOML file via --config, or --set key=value):\n\n  {:<36} {:<20} description\n{}",
        "key",
        "default",
        PipelineConfig::describe_keys()
    )
}

#[derive(Parser)]
#[command(
    name = "tdflio",
    version,
    about = "Truncated distance field mapping and LiDAR-inertial odometry",
    after_help = "Exit codes: 0 success, 2 input error, 3 insufficient data, 4 resource limit."
)]
struct Cli {
    /// Worker threads for map updates and registration [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run odometry on a dataset and write trajectory, timing and map
    #[command(after_help = config_help())]
    Run(commands::RunArgs),
    /// Fuse scans at known poses into a distance field
    #[command(after_help = config_help())]
    Map(commands::MapArgs),
    /// Absolute translation error of an estimate against ground truth
    Eval(commands::EvalArgs),
    /// Microbenchmarks for map insertion, interpolation and registration
    #[command(after_help = config_help())]
    Bench(bench::BenchArgs),
    /// Convert a map snapshot to a PLY point cloud of its zero level
    Export(commands::ExportArgs),
    /// Write a synthetic corridor dataset
    Synth(commands::SynthArgs),
}

/// Configuration file plus command-line overrides.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML configuration file
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set map.resolution=0.1
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).map_err(|e| Failure::input(anyhow::anyhow!(e)))?,
            None => PipelineConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)
                .map_err(|e| Failure::input(anyhow::anyhow!("--set {o}: {e}")))?;
        }
        Ok(cfg)
    }
}

/// Memory budget for grids: 8 GiB or the memory currently available,
/// whichever is smaller.
pub fn host_budget() -> u64 {
    available_memory().map_or(HOST_BUDGET_CAP, |m| m.min(HOST_BUDGET_CAP))
}

fn available_memory() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

/// Clamps the configured grid budget to [`host_budget`].
pub fn clamp_budget(cfg: &mut PipelineConfig) {
    let host_mb = host_budget() >> 20;
    cfg.map.memory_budget_mb = cfg.map.memory_budget_mb.min(host_mb);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(failure::EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Run(a) => commands::run(a),
        Command::Map(a) => commands::map(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => bench::bench(a),
        Command::Export(a) => commands::export(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
