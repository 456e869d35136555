//! `failprobe` operator CLI.
//!
//! Exit codes: 0 ok, 2 usage, 3 data error, 4 model missing.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "failprobe",
    version,
    about = "Collect, validate and analyse classifier failures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the naive Bayes stand-in model from a `text,label` CSV.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API over an event-log store.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Platform config (TOML) used when the store is created.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Classify a labelled CSV and store the misclassified sentences.
    ImportBenchmark {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Category name to file the imported errors under.
        #[arg(long)]
        category: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the stored errors as `Text,Human_Label,AI_Label,Category`.
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
    /// Draw stored misclassified sentences uniformly without replacement.
    SampleMisclassified {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulator scenario.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Scenario TOML; defaults apply when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Event log to write; must not exist yet.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Export CSV of the adjudicated samples.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Export adjudicated samples (csv) or the analysis summary (json).
    Export {
        #[arg(long)]
        store: PathBuf,
        /// Required for json, which includes explanations.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explain one sentence and print it with per-word colours.
    ExplainOne {
        #[arg(long)]
        model: PathBuf,
        text: String,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Color::Auto)]
        color: Color,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Color {
    Auto,
    Always,
    Never,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("model file {0} not found")]
    ModelMissing(PathBuf),
    #[error(transparent)]
    Core(#[from] failprobe_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::ModelMissing(_) => 4,
            _ => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
