//! `mtrx`: the translation pipeline driver.
//!
//! Subcommands mirror the pipeline stages: `preprocess` turns raw aligned
//! text into cleaned corpus files, `build-vocab` derives vocabularies,
//! `train` fits a model from a config file, `translate` decodes new text
//! with a checkpoint, `evaluate` scores translations with BLEU, and
//! `report` merges training logs for plotting.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mtrx", version, about = "Neural machine translation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and tokenize an aligned corpus, optionally splitting it
    Preprocess(commands::PreprocessArgs),
    /// Build a vocabulary from one side of a tokenized corpus
    BuildVocab(commands::BuildVocabArgs),
    /// Train a model from a run configuration file
    Train(commands::TrainArgs),
    /// Translate a file with a trained checkpoint
    Translate(commands::TranslateArgs),
    /// Score candidate translations against references with BLEU
    Evaluate(commands::EvaluateArgs),
    /// Merge training logs into one CSV
    Report(commands::ReportArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Preprocess(args) => commands::preprocess(args),
        Command::BuildVocab(args) => commands::build_vocab(args),
        Command::Train(args) => commands::train(args),
        Command::Translate(args) => commands::translate(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Report(args) => commands::report(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
