//! `cte`: command-line driver for the correspondence-transformer pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/IO error, 3 numerical
//! abort (NaN or failed gradient check). Logs go to stderr; results go to
//! the declared output paths.

mod commands;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cte",
    version,
    about = "Acoustic word embeddings with a teacher-student transformer encoder"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Method {
    /// Student-encoder embeddings (requires --checkpoint).
    Cte,
    /// Fixed-rate frame downsampling baseline.
    Downsampling,
    /// DTW alignment-cost baseline.
    Dtw,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic word corpus (WAVs + manifests).
    GenCorpus {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        word_types: usize,
        #[arg(long, default_value_t = 12)]
        instances: usize,
        #[arg(long, default_value_t = 8)]
        speakers: usize,
        #[arg(long, default_value_t = 1)]
        valid_speakers: usize,
        #[arg(long, default_value_t = 2)]
        test_speakers: usize,
    },
    /// Compute log-Mel features for every utterance in the manifests.
    Featurize {
        /// Alignment manifest(s) naming utterances and wav paths.
        #[arg(long, required = true)]
        alignments: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the ordered same-word training pairs from an alignment manifest.
    Pairs {
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pre-train a model on a pair manifest.
    Train {
        /// Flat key=value config file; flags override file values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Inline config overrides, e.g. --set optim.total_steps=3000.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Shorthand for --set optim.seed=N.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        pairs: PathBuf,
        /// Directory of <utterance>.ctef feature files.
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fine-tune a checkpoint on a new pair manifest.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fine-tuning step budget.
        #[arg(long, default_value_t = cte::trainer::DEFAULT_FINETUNE_STEPS)]
        steps: usize,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Extract embeddings for every segment of an alignment manifest.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Same-different evaluation: score all segment pairs, report the
    /// ROC-area and precision-recall AP.
    EvalSamediff {
        #[arg(long, value_enum, default_value = "cte")]
        method: Method,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean cosine similarity per phone-edit-distance bucket.
    EvalPsed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long)]
        phones: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PCA projection of segment embeddings.
    EvalPca {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        components: usize,
    },
    /// Gradient-check every primitive and the full toy-model objective.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<cte::Error>() {
        Some(cte::Error::NonFinite(_)) | Some(cte::Error::Determinism(_)) => 3,
        _ => 2,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match commands::run(cli.command) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code_for(&err));
        }
    }
}
