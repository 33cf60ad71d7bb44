//! Experiment command line for the Gaussian adaptive attention family:
//! generate synthetic regime-switching datasets, train and evaluate
//! decoders, export importance heatmaps, ablate layers, and account for
//! parameters.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand, ValueEnum};
use commands::AblateMode;
use importance_factor::HeatmapFormat;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gaam",
    about = "Train, evaluate, and explain Gaussian adaptive attention models \
             on synthetic regime-switching data.",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic regime-switching dataset.
    Generate {
        /// Dataset recipe, as key = value lines.
        #[arg(long)]
        spec: PathBuf,
        /// Output dataset file; falls back to the `out` config key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a decoder; writes a checkpoint and `<out>.metrics.csv`.
    Train {
        /// Architecture and training settings, as key = value lines.
        #[arg(long)]
        config: PathBuf,
        /// Dataset file; falls back to the `data` config key.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint output path; falls back to the `out` config key.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write per-sample predictions as CSV.
        #[arg(long)]
        predictions_out: Option<PathBuf>,
    },
    /// Export the importance heatmap and per-layer contributions.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output prefix; the format extension is appended.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
    /// Retrain on the k most or least important layers and compare.
    Ablate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// How many layers to keep.
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
    },
    /// Print the parameter budget of a decoder configuration.
    Paramcount {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Pgm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    High,
    Low,
    Both,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { spec, out } => commands::cmd_generate(&spec, out),
        Command::Train { config, data, out } => commands::cmd_train(&config, data, out),
        Command::Eval {
            checkpoint,
            data,
            predictions_out,
        } => commands::cmd_eval(&checkpoint, &data, predictions_out),
        Command::Heatmap {
            checkpoint,
            data,
            out,
            format,
        } => {
            let format = match format {
                FormatArg::Csv => HeatmapFormat::Csv,
                FormatArg::Pgm => HeatmapFormat::Pgm,
            };
            commands::cmd_heatmap(&checkpoint, &data, &out, format)
        }
        Command::Ablate {
            checkpoint,
            data,
            k,
            mode,
        } => {
            let mode = match mode {
                ModeArg::High => AblateMode::High,
                ModeArg::Low => AblateMode::Low,
                ModeArg::Both => AblateMode::Both,
            };
            commands::cmd_ablate(&checkpoint, &data, k, mode)
        }
        Command::Paramcount { config } => commands::cmd_paramcount(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
