//! Command-line driver for weighted tensor decomposition experiments:
//! preprocessing, training, evaluation, grid search and the post-hoc
//! context-fitting experiment.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// A classified failure: usage errors exit 2, runtime errors exit 1.
#[derive(Debug)]
pub struct CliError {
    pub usage: bool,
    pub message: String,
}

impl CliError {
    pub fn usage(message: String) -> Self {
        CliError {
            usage: true,
            message,
        }
    }

    pub fn runtime(message: String) -> Self {
        CliError {
            usage: false,
            message,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tenrec",
    version,
    about = "Context-aware recommendation with weighted tensor decompositions"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all hardware threads).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the preprocessing pipeline and write the canonical interaction
    /// file plus schema sidecar.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Train one model and serialize it.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Training seed (defaults to the first config seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Train on the train side of this leave-one-out split instead of
        /// the full data (pairs with `posthoc` on the same seed).
        #[arg(long)]
        split_seed: Option<u64>,
    },
    /// Full experiment: optional grid search, repeated leave-one-out
    /// cross-validation, report and model artifacts.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Exhaustive hyperparameter sweep on a single split.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Fit context factors against a frozen WMF model and evaluate.
    Posthoc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Path to the serialized base WMF model (overrides the config).
        #[arg(long)]
        base_model: Option<PathBuf>,
        /// Full-training report.json for the percentage-of-original column.
        #[arg(long)]
        reference_report: Option<PathBuf>,
    },
    /// Print a JSON report as a TSV table.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess { config, output_dir } => {
            let cfg = RunConfig::load(&config)?;
            init_threads(cli.threads.or(cfg.threads))?;
            let out = cfg.resolve_output_dir(output_dir.as_deref());
            commands::cmd_preprocess(&config, &cfg, &out)
        }
        Command::Train {
            config,
            output_dir,
            seed,
            split_seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            init_threads(cli.threads.or(cfg.threads))?;
            let out = cfg.resolve_output_dir(output_dir.as_deref());
            commands::cmd_train(&config, &cfg, &out, seed, split_seed)
        }
        Command::Evaluate { config, output_dir } => {
            let cfg = RunConfig::load(&config)?;
            init_threads(cli.threads.or(cfg.threads))?;
            let out = cfg.resolve_output_dir(output_dir.as_deref());
            commands::cmd_evaluate(&config, &cfg, &out)
        }
        Command::Grid { config, output_dir } => {
            let cfg = RunConfig::load(&config)?;
            init_threads(cli.threads.or(cfg.threads))?;
            let out = cfg.resolve_output_dir(output_dir.as_deref());
            commands::cmd_grid(&config, &cfg, &out)
        }
        Command::Posthoc {
            config,
            output_dir,
            base_model,
            reference_report,
        } => {
            let cfg = RunConfig::load(&config)?;
            init_threads(cli.threads.or(cfg.threads))?;
            let out = cfg.resolve_output_dir(output_dir.as_deref());
            commands::cmd_posthoc(
                &config,
                &cfg,
                &out,
                base_model.as_deref(),
                reference_report.as_deref(),
            )
        }
        Command::Report { input } => commands::cmd_report(&input),
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(0),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(if e.usage { 2 } else { 1 })
        }
    }
}
