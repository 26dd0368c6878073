mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::exit::{Failure, ResultExt, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(
    name = "qpdn",
    version,
    about = "Process-tomography denoising pipeline"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel stages
    #[arg(long, global = true, env = "QPDN_THREADS")]
    threads: Option<usize>,
    /// Only log warnings and errors
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    Linear,
    Mle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the noisy/theoretical dataset
    Gen {
        #[arg(long)]
        instances: Option<usize>,
        /// Comma-separated signal ratios
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// Reconstruct a process matrix from a count table
    Qpt {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, value_enum, default_value = "linear")]
        method: Method,
        /// True channel phase (radians), to report the fidelity
        #[arg(long)]
        phi: Option<f64>,
        /// Output chi CSV (default: <out>/qpt/chi_<method>.csv)
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the denoising autoencoder
    TrainAe {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train one autoencoder per kernel size and pick the best
    SweepKernel {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Kernel sizes, e.g. `1..7` or `2,3,5`
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Denoise a chi file, or the test split of a dataset
    Denoise {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "dataset")]
        input: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train the parameter extractor on autoencoder outputs
    TrainFfnn {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        ae_model: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Extract the channel phase from a chi file or a dataset's test split
    Extract {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        ae_model: Option<PathBuf>,
        #[arg(long, conflicts_with = "dataset")]
        input: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Method-comparison fidelity table and difference heatmaps
    Report {
        #[arg(long)]
        ae_model: Option<PathBuf>,
        #[arg(long)]
        instances: Option<usize>,
    },
}

fn resolve_config(global: &GlobalArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path).code(EXIT_CONFIG)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.out = out.clone();
    }
    if let Some(t) = global.threads {
        cfg.threads = Some(t);
    }
    if global.quiet {
        cfg.log_level = "warn".into();
    }
    cfg.validate().code(EXIT_CONFIG)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve_config(&cli.global)?;
    env_logger::Builder::new()
        .parse_filters(&cfg.log_level)
        .format_timestamp(None)
        .try_init()
        .ok();
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }
    commands::dispatch(&cfg, cli.command)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
