//! `intentforge` — purchase-intent prediction from clickstream sessions.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "intentforge",
    version,
    about = "Session-based purchase-intent prediction: synthetic data, feature pipeline, LSTM training, evaluation",
    after_help = "Config: JSON file via --config, overridden by repeated --set key=value \
                  (dotted paths, e.g. --set train.max_epochs=15). Logging: INTENTFORGE_LOG=error|warn|info|debug."
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Override a config value, e.g. --set generator.n_users=5000.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event CSV with planted ground truth.
    Generate,
    /// Parse, sessionize, featurize, and split an event CSV.
    Prepare {
        /// Raw event CSV.
        input: PathBuf,
    },
    /// Train the model on a prepared split.
    Train {
        /// Directory written by `prepare`.
        #[arg(long)]
        split: PathBuf,
    },
    /// Classification report at one threshold.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Decision threshold (default from config: 0.5).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Reports across the 0.3-0.9 threshold range.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
    },
    /// Side-by-side table: logistic regression, plain LSTM, and the model.
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Checkpoint trained with replay and exploration disabled.
        #[arg(long)]
        plain_checkpoint: PathBuf,
        #[arg(long)]
        split: PathBuf,
    },
    /// Score raw events with a checkpoint's embedded schema.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Raw event CSV.
        input: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = RunConfig::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    let out = &cli.out;
    match &cli.command {
        Command::Generate => commands::cmd_generate(&config, out),
        Command::Prepare { input } => commands::cmd_prepare(input, &config, out),
        Command::Train { split } => commands::cmd_train(split, &config, out),
        Command::Evaluate {
            checkpoint,
            split,
            threshold,
        } => commands::cmd_evaluate(checkpoint, split, &config, *threshold, out),
        Command::Sweep { checkpoint, split } => {
            commands::cmd_sweep(checkpoint, split, &config, out)
        }
        Command::Compare {
            checkpoint,
            plain_checkpoint,
            split,
        } => commands::cmd_compare(checkpoint, plain_checkpoint, split, &config, out),
        Command::Predict { checkpoint, input } => commands::cmd_predict(checkpoint, input, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("INTENTFORGE_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
