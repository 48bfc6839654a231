//! `croco`: train a classifier, generate robust counterfactuals, and run
//! benchmark sweeps from one JSON config.
//!
//! Exit codes: 0 success, 2 configuration or input-file error, 3 runtime
//! failure. Set `CROCO_LOG` (e.g. `CROCO_LOG=info`) for progress output.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use croco::{Error, Result};

#[derive(Parser)]
#[command(name = "croco", version, about = "Robust counterfactual explanations for tabular classifiers")]
struct Cli {
    /// JSON run configuration (required by every command except bound-table)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker thread cap for batch generation
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the config output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured classifier and save weights plus metrics
    Train,
    /// Generate counterfactuals for selected instances
    Generate {
        /// Instance rows, e.g. "0,3,7-9"; defaults to all unfavorable rows
        /// capped at instances_per_cell
        #[arg(long)]
        instances: Option<String>,
    },
    /// Run the (method x sigma^2 x target) sweep and emit CSV artifacts
    Sweep,
    /// Print required sample counts K for (m, confidence) pairs
    BoundTable {
        /// Tightness values, comma-separated
        #[arg(long, value_delimiter = ',')]
        m: Vec<f64>,
        /// Confidence levels, comma-separated
        #[arg(long, value_delimiter = ',')]
        confidence: Vec<f64>,
    },
    /// Re-score generated counterfactuals with fresh evaluation draws
    Evaluate {
        /// Result file or directory produced by generate
        #[arg(long)]
        results: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CROCO_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Command::BoundTable { m, confidence } = &cli.command {
        return commands::cmd_bound_table(m, confidence, cli.out.as_deref());
    }

    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config PATH is required for this command".into()))?;
    let mut config = RunConfig::from_json_file(config_path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    let out_dir = config.out_dir.clone();

    match cli.command {
        Command::Train => commands::cmd_train(&config, &out_dir),
        Command::Generate { instances } => {
            commands::cmd_generate(&config, instances.as_deref(), &out_dir)
        }
        Command::Sweep => commands::cmd_sweep(&config, &out_dir),
        Command::Evaluate { results } => commands::cmd_evaluate(&config, &results, &out_dir),
        Command::BoundTable { .. } => unreachable!("handled above"),
    }
}
