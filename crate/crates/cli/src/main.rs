//! `intentctl`: runs the intent pipeline one stage at a time.
//!
//! Each stage reads the artifacts of the previous stage from `--in`, writes
//! its own artifacts (plus copies of the upstream ones) to `--out` and
//! records input hashes in `manifest.json`. A stage whose inputs and
//! settings are unchanged is skipped unless `--from-scratch` is given.
//!
//! Exit status: 0 on success, 1 on configuration or validation errors
//! (including missing artifacts), 2 on data errors.

mod failure;
mod stages;
mod store;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use intent_core::model::Head;
use intent_core::taxonomy::LabelMode;

#[derive(Parser, Debug)]
#[command(name = "intentctl", version, about = "Intent recognition pipeline")]
pub struct Cli {
    /// Re-run the stage even when its manifest says it is up to date.
    #[arg(long, global = true)]
    pub from_scratch: bool,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a raw corpus file into conversations.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        field_map: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus statistics and validation counts.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Normalize, tokenize, remove stopwords and lemmatize.
    Curate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Drop conversations that fail the validation rules.
        #[arg(long)]
        valid_only: bool,
    },
    /// Split by conversation, fit TF-IDF on the training part, extract features.
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        lexicons: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Attach labels and turn context to every utterance.
    Contextualize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on the training split.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also train one model per sentiment polarity.
        #[arg(long)]
        per_sentiment: bool,
        #[arg(long)]
        head: Option<Head>,
        #[arg(long, value_parser = parse_label_mode)]
        label_mode: Option<LabelMode>,
    },
    /// Score a trained model on the held-out test split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write CSV and text reports from an evaluated run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on random models.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

#[derive(Args, Debug, Clone, Copy)]
pub struct SplitArgs {
    /// Number of test conversations [default: 1000].
    #[arg(long, conflicts_with = "test_fraction")]
    pub test_count: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Number of validation conversations taken after the test split.
    #[arg(long, conflicts_with = "valid_fraction")]
    pub valid_count: Option<usize>,
    /// Fraction of the non-test conversations used for validation [default: 0.1].
    #[arg(long)]
    pub valid_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

fn parse_label_mode(s: &str) -> Result<LabelMode, String> {
    s.parse().map_err(|e: intent_core::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match stages::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}
