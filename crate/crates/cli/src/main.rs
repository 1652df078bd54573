mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Overrides, Precision};
use error::CliError;

#[derive(Parser)]
#[command(name = "scatlearn", version, about = "Scattering transforms and shared local encoders")]
struct Cli {
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch work; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Build the filter bank and write it as a container file.
    Filters {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Littlewood-Paley bounds, optionally with the full curve as CSV.
    LpCheck {
        #[command(flatten)]
        common: Common,
        /// Inner radius of the frequency annulus.
        #[arg(long)]
        lo: Option<f64>,
        /// Outer radius of the frequency annulus.
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scatter a PPM image or a CIFAR-10 binary batch.
    Transform {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Keep only the first records of a batch.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder and write the model and per-epoch metrics.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Test accuracy of a trained model.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Angular spectra of the first layer, optional sparsification.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Target fraction of zeroed angular coefficients.
        #[arg(long)]
        sparsity: Option<f64>,
        /// Report test accuracy before and after sparsification.
        #[arg(long)]
        evaluate: bool,
    },
    /// Rotation-covariance errors on PPM images or generated test images.
    Covariance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Vec<PathBuf>,
        /// Generated images when no input is given.
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        quarter_turns: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(common: &Common, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(common.config.as_deref())?.resolve(&common.overrides, seed)
}

/// Model commands default to the config stored in the model file.
fn resolve_with_model(common: &Common, seed: Option<u64>, model: &std::path::Path) -> Result<ExperimentConfig, CliError> {
    let base = match &common.config {
        Some(_) => ExperimentConfig::load(common.config.as_deref())?,
        None => commands::load_model::<f32>(model)?.1,
    };
    base.resolve(&common.overrides, seed)
}

macro_rules! dispatch {
    ($cfg:expr, $f:ident ( $($arg:expr),* )) => {
        match $cfg.precision {
            Precision::F32 => commands::$f::<f32>($($arg),*),
            Precision::F64 => commands::$f::<f64>($($arg),*),
        }
    };
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    let seed = cli.seed;
    match &cli.command {
        Command::Filters { common, out } => commands::filters(&resolve(common, seed)?, out),
        Command::LpCheck { common, lo, hi, out } => commands::lp_check(&resolve(common, seed)?, *lo, *hi, out.as_deref()),
        Command::Transform {
            common,
            input,
            limit,
            out,
        } => {
            let cfg = resolve(common, seed)?;
            dispatch!(cfg, transform(&cfg, input, *limit, out))
        }
        Command::Train { common, model, metrics } => {
            let cfg = resolve(common, seed)?;
            dispatch!(cfg, train_cmd(&cfg, model, metrics))
        }
        Command::Eval { common, model, out } => {
            let cfg = resolve_with_model(common, seed, model)?;
            dispatch!(cfg, eval_cmd(&cfg, model, out))
        }
        Command::Analyze {
            common,
            model,
            out_dir,
            sparsity,
            evaluate,
        } => {
            let cfg = resolve_with_model(common, seed, model)?;
            dispatch!(cfg, analyze(&cfg, model, out_dir, *sparsity, *evaluate))
        }
        Command::Covariance {
            common,
            input,
            count,
            quarter_turns,
            out,
        } => {
            let cfg = resolve(common, seed)?;
            dispatch!(cfg, covariance(&cfg, input, *count, *quarter_turns, out))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
