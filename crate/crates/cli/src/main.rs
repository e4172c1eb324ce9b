//! Command-line pipeline: synthetic data generation, training, RMSE
//! evaluation, worst-case gain search, certificate verification, model
//! comparison and grid runs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{exit_code_for, GainArgs};
use config::load_config;

#[derive(Parser)]
#[command(
    name = "lmirnn",
    version,
    about = "Learn recurrent models with certified finite-gain bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark dataset as CSV files plus a manifest.
    Generate {
        /// Run configuration (JSON or TOML) with a synthetic dataset profile.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Train the initializer and predictor; writes checkpoint.json and
    /// line-delimited training logs. Exit code 4 means the line search
    /// stopped training early (the last feasible checkpoint is still written).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Per-channel RMSE (original units) over an evaluation horizon.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// train | val | test | ood
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        t_init: Option<usize>,
        /// Report path (defaults to metrics_<split>.json next to the checkpoint).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate the worst (incremental) stability gain by gradient ascent
    /// on an input perturbation.
    GainSearch {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "val")]
        split: String,
        /// gain | incremental
        #[arg(long, default_value = "gain")]
        mode: String,
        /// Ascent steps (defaults: 2000 for gain, 1000 for incremental).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Use Adam instead of plain gradient ascent.
        #[arg(long)]
        adam: bool,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        t_init: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-verify the stored certificate: definiteness of the constraint
    /// matrix plus the dissipation bound on fresh random sequences.
    /// Exit code 0 iff all checks pass.
    Certify {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        sequences: usize,
        #[arg(long, default_value_t = 200)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Merge per-run metrics and gain reports into one table.
    Compare {
        /// Run directories containing metrics_<split>.json (and optional
        /// gain reports).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "comparison.json")]
        output: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write (worst gain, mean RMSE) pairs for plotting.
        #[arg(long)]
        emit_plot_data: Option<PathBuf>,
    },
    /// Expand grid lists (n_z, gamma_sq) into sequential training runs and
    /// emit a leaderboard sorted by validation mean RMSE.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn run() -> lmirnn_core::Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { config, output_dir } => {
            let cfg = load_config(&config)?;
            commands::cmd_generate(&cfg, output_dir.as_deref())
        }
        Command::Train { config, output_dir } => {
            let cfg = load_config(&config)?;
            commands::cmd_train(&cfg, output_dir.as_deref())
        }
        Command::Evaluate {
            checkpoint,
            config,
            split,
            horizon,
            t_init,
            output,
        } => {
            let cfg = load_config(&config)?;
            commands::cmd_evaluate(&checkpoint, &cfg, &split, horizon, t_init, output.as_deref())
        }
        Command::GainSearch {
            checkpoint,
            config,
            split,
            mode,
            steps,
            learning_rate,
            adam,
            horizon,
            t_init,
            seed,
            output,
        } => {
            let cfg = load_config(&config)?;
            let args = GainArgs {
                mode,
                steps,
                learning_rate,
                use_adam: adam,
                horizon,
                t_init,
                seed,
            };
            commands::cmd_gain_search(&checkpoint, &cfg, &split, &args, output.as_deref())
        }
        Command::Certify {
            checkpoint,
            sequences,
            length,
            seed,
            output,
        } => commands::cmd_certify(&checkpoint, sequences, length, seed, output.as_deref()),
        Command::Compare {
            runs,
            split,
            output,
            csv,
            emit_plot_data,
        } => commands::cmd_compare(
            &runs,
            &split,
            &output,
            csv.as_deref(),
            emit_plot_data.as_deref(),
        ),
        Command::Grid { config, output_dir } => {
            let cfg = load_config(&config)?;
            commands::cmd_grid(&cfg, output_dir.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
