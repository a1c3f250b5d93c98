//! `mtbr`: preprocessing, synthetic data, training, evaluation and
//! diagnostics for the multiview fusion models.
//!
//! Exit codes: 0 success, 1 usage, 2 data or format error, 3 numeric failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtbr_core::dataio::Split;
use mtbr_core::dct::SNIPPET_LEN;
use mtbr_core::models::MiniatureKind;

#[derive(Debug, Parser)]
#[command(name = "mtbr", version, about = "Multiview attention fusion for bodily behavior recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pack a directory of image files into an MTVF raw video.
    Pack {
        #[arg(long)]
        input_dir: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Resize every frame to SIZE×SIZE.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Per-frame 2-D DCT of a raw video.
    Dct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Write log-magnitude PNGs of every DCT frame here.
        #[arg(long)]
        visualize: Option<PathBuf>,
        #[arg(long, default_value_t = SNIPPET_LEN)]
        snippet_len: usize,
    },
    /// Generate a planted-signal dataset from a key=value spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train from a key=value run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
    },
    /// Mean attention per view and modality.
    AttentionReport {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "val")]
        split: Split,
    },
    /// Finite-difference gradient check of a small random model.
    Gradcheck {
        #[arg(long)]
        model: MiniatureKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failures mapped onto the exit-code taxonomy.
#[derive(Debug)]
enum Failure {
    Data(mtbr_core::Error),
    Numeric(String),
}

impl From<mtbr_core::Error> for Failure {
    fn from(e: mtbr_core::Error) -> Self {
        match e {
            mtbr_core::Error::Numeric(msg) => Failure::Numeric(msg),
            other => Failure::Data(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Pack { input_dir, output, size } => commands::pack(&input_dir, &output, size),
        Command::Dct {
            input,
            output,
            visualize,
            snippet_len,
        } => commands::dct(&input, &output, visualize.as_deref(), snippet_len),
        Command::Synth { spec, output } => commands::synth(&spec, &output),
        Command::Train { config } => commands::train(&config),
        Command::Eval {
            checkpoint,
            dataset,
            split,
        } => commands::eval(&checkpoint, &dataset, split),
        Command::AttentionReport {
            checkpoint,
            dataset,
            split,
        } => commands::attention(&checkpoint, &dataset, split),
        Command::Gradcheck { model, seed } => commands::gradcheck(model, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
    }
}
