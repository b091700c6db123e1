//! The six pipeline commands. Each validates its inputs and output paths
//! before doing any work, writes artifacts only on success, and leaves
//! existing files alone unless `--force` is passed.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;

use mtrx_core::bleu::{bleu_corpus, BleuOptions};
use mtrx_core::checkpoint::Checkpoint;
use mtrx_core::decode;
use mtrx_core::model::TransformerModel;
use mtrx_core::preprocess::{CleanConfig, Origin, ParallelCorpus, SplitSpec};
use mtrx_core::training::{self, TrainStop};
use mtrx_core::vocab::Vocabulary;
use mtrx_core::{Error, Result, Rng};

use crate::config::{Overrides, RunManifest};

fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::invalid_input(format!(
            "refusing to overwrite {} (pass --force to allow)",
            path.display()
        )));
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Source-language text file, one sentence per line
    #[arg(long)]
    pub source: PathBuf,
    /// Target-language text file, line-aligned with the source
    #[arg(long)]
    pub target: PathBuf,
    /// Directory for the cleaned corpus files and stats.tsv
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Pairs held out for validation (0 with --test 0 disables the split)
    #[arg(long, default_value_t = 0)]
    pub valid: usize,
    /// Pairs held out for testing
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    /// Shuffle seed for the split
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Drop pairs with a side shorter than this many tokens
    #[arg(long, default_value_t = 1)]
    pub min_len: usize,
    /// Drop pairs with a side longer than this many tokens
    #[arg(long, default_value_t = 80)]
    pub max_len: usize,
    /// Drop pairs whose side lengths differ by more than this factor
    #[arg(long, default_value_t = 9.0)]
    pub max_ratio: f64,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

/// Normalize, tokenize, clean, and deduplicate an aligned file pair, then
/// optionally split it. Emits train/valid/test file pairs plus a stats.tsv
/// with the per-stage pair counts, and prints those counts to stdout.
pub fn preprocess(args: &PreprocessArgs) -> Result<()> {
    let out = |name: &str| args.out_dir.join(name);
    let split_requested = args.valid + args.test > 0;
    let mut outputs = vec![out("train.src"), out("train.tgt"), out("stats.tsv")];
    if split_requested {
        outputs.extend([out("valid.src"), out("valid.tgt"), out("test.src"), out("test.tgt")]);
    }
    std::fs::create_dir_all(&args.out_dir)?;
    for path in &outputs {
        ensure_writable(path, args.force)?;
    }

    let clean_config = CleanConfig {
        min_len: args.min_len,
        max_len: args.max_len,
        max_ratio: args.max_ratio,
    };
    let corpus = ParallelCorpus::read_files(&args.source, &args.target, Origin::InDomain)?
        .clean(&clean_config)
        .dedup();
    let stats = corpus.stats;

    if split_requested {
        let spec = SplitSpec { valid_size: args.valid, test_size: args.test, seed: args.seed };
        let (train_part, valid, test) = corpus.split(&spec)?;
        train_part.write_files(&out("train.src"), &out("train.tgt"))?;
        valid.write_files(&out("valid.src"), &out("valid.tgt"))?;
        test.write_files(&out("test.src"), &out("test.tgt"))?;
    } else {
        // No holdout: keep corpus order, so reprocessing our own output
        // reproduces it byte for byte.
        corpus.write_files(&out("train.src"), &out("train.tgt"))?;
    }
    std::fs::write(out("stats.tsv"), stats.to_string())?;
    print!("{stats}");
    Ok(())
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    /// Tokenized corpus file (one side), one sentence per line
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output vocabulary TSV (token<TAB>frequency)
    #[arg(long)]
    pub output: PathBuf,
    /// Keep tokens occurring at least this often
    #[arg(long, default_value_t = 1)]
    pub min_freq: u64,
    /// Overwrite an existing vocabulary file
    #[arg(long)]
    pub force: bool,
}

/// Build a word-level vocabulary (with the four reserved special tokens)
/// from one side of a tokenized corpus.
pub fn build_vocab(args: &BuildVocabArgs) -> Result<()> {
    ensure_writable(&args.output, args.force)?;
    let text = std::fs::read_to_string(&args.corpus)?;
    let sequences: Vec<Vec<String>> = text
        .lines()
        .map(|line| line.split_whitespace().map(str::to_string).collect())
        .collect();
    let vocab = Vocabulary::build(sequences.iter().map(|s| s.as_slice()), args.min_freq)?;
    create_parent(&args.output)?;
    vocab.save(&args.output)?;
    println!("{} tokens -> {}", vocab.size(), args.output.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Flat `key = value` run configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// General-domain source file mixed into the training corpus
    #[arg(long, requires = "mix_target")]
    pub mix_source: Option<PathBuf>,
    /// General-domain target file mixed into the training corpus
    #[arg(long, requires = "mix_source")]
    pub mix_target: Option<PathBuf>,
    /// Override the config's epoch count
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override the config's learning rate
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Override the config's batch size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Override the config's dropout probability
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Override the config's RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's early-stopping patience
    #[arg(long)]
    pub patience: Option<usize>,
    /// Override early stopping (true or false)
    #[arg(long)]
    pub early_stopping: Option<bool>,
    /// Override gradient clipping: a norm bound, or `none`
    #[arg(long)]
    pub grad_clip: Option<String>,
    /// Override the config's run label
    #[arg(long)]
    pub run_label: Option<String>,
    /// Overwrite existing checkpoint and log files
    #[arg(long)]
    pub force: bool,
}

/// Train a model as described by the config file (plus any flag overrides),
/// writing a checkpoint and a per-epoch CSV log. A diverged run still saves
/// its best snapshot but exits nonzero.
pub fn train(args: &TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::from_file(&args.config)?;
    manifest.mix = match (&args.mix_source, &args.mix_target) {
        (Some(source), Some(target)) => Some((source.clone(), target.clone())),
        _ => None,
    };
    let overrides = Overrides {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        dropout: args.dropout,
        seed: args.seed,
        patience: args.patience,
        early_stopping: args.early_stopping,
        grad_clip: args.grad_clip.clone(),
        run_label: args.run_label.clone(),
    };
    manifest.apply(&overrides)?;
    manifest.train.validate()?;
    for path in manifest.input_paths() {
        if !path.exists() {
            return Err(Error::invalid_input(format!(
                "missing input file {}",
                path.display()
            )));
        }
    }
    ensure_writable(&manifest.checkpoint_out, args.force)?;
    ensure_writable(&manifest.log_out, args.force)?;

    let src_vocab = Vocabulary::load(&manifest.src_vocab)?;
    let tgt_vocab = Vocabulary::load(&manifest.tgt_vocab)?;
    let mut train_corpus =
        ParallelCorpus::read_files(&manifest.train_source, &manifest.train_target, Origin::InDomain)?;
    if let Some((mix_source, mix_target)) = &manifest.mix {
        let general = ParallelCorpus::read_files(mix_source, mix_target, Origin::GeneralDomain)?;
        log::info!(
            "mixing {} general-domain pairs into {} in-domain pairs",
            general.len(),
            train_corpus.len()
        );
        train_corpus = train_corpus.mix(general);
    }
    let valid_corpus =
        ParallelCorpus::read_files(&manifest.valid_source, &manifest.valid_target, Origin::InDomain)?;

    let mut model_config = manifest.model.clone();
    model_config.src_vocab_size = src_vocab.size();
    model_config.tgt_vocab_size = tgt_vocab.size();
    model_config.validate()?;

    log::info!(
        "run {}: {} training pairs, {} validation pairs",
        manifest.run_label,
        train_corpus.len(),
        valid_corpus.len()
    );
    let model =
        TransformerModel::<f32>::new(model_config, &mut Rng::seed_from(manifest.train.seed))?;
    let outcome = training::train(
        model,
        &train_corpus,
        &valid_corpus,
        &src_vocab,
        &tgt_vocab,
        &manifest.train,
        &manifest.run_label,
    )?;

    create_parent(&manifest.checkpoint_out)?;
    create_parent(&manifest.log_out)?;
    let epoch = outcome.log.records.len() as u32;
    Checkpoint::capture(&outcome.model, &manifest.train, epoch, &src_vocab, &tgt_vocab, None)
        .save(&manifest.checkpoint_out)?;
    outcome.log.write_csv(&manifest.log_out)?;

    if let Some(last) = outcome.log.records.last() {
        println!(
            "final epoch {}: train loss {:.4}, valid loss {:.4}",
            last.epoch, last.train_loss, last.valid_loss
        );
    }
    println!("stop: {}", outcome.stop);
    println!("checkpoint -> {}", manifest.checkpoint_out.display());
    println!("log -> {}", manifest.log_out.display());
    if matches!(outcome.stop, TrainStop::Diverged { .. }) {
        return Err(Error::Diverged(format!(
            "{}; best snapshot written to {}",
            outcome.stop,
            manifest.checkpoint_out.display()
        )));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    /// Trained checkpoint (the vocabularies travel inside it)
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input text, one sentence per line
    #[arg(long)]
    pub input: PathBuf,
    /// Output file, one translation per line
    #[arg(long)]
    pub output: PathBuf,
    /// Overwrite an existing output file
    #[arg(long)]
    pub force: bool,
}

/// Greedy-translate a file line by line with a trained checkpoint.
pub fn translate(args: &TranslateArgs) -> Result<()> {
    ensure_writable(&args.output, args.force)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let model = checkpoint.restore_model()?;
    create_parent(&args.output)?;
    decode::translate_file(
        &model,
        &checkpoint.src_vocab,
        &checkpoint.tgt_vocab,
        &args.input,
        &args.output,
    )?;
    println!("{} -> {}", args.input.display(), args.output.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Candidate translations, one tokenized line each
    #[arg(long)]
    pub candidates: PathBuf,
    /// Reference translations, line-aligned with the candidates
    #[arg(long)]
    pub references: PathBuf,
    /// Largest n-gram order scored
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    /// Replace zero match counts with (matched+1)/(total+1)
    #[arg(long)]
    pub smoothing: bool,
}

/// Corpus BLEU of a candidate file against a line-aligned reference file.
/// Prints the full report plus a machine-readable `score = <bleu>` line
/// with the raw [0, 1] value.
pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let read_tokens = |path: &Path| -> Result<Vec<Vec<String>>> {
        Ok(std::fs::read_to_string(path)?
            .lines()
            .map(|line| line.split_whitespace().map(str::to_string).collect())
            .collect())
    };
    let candidates = read_tokens(&args.candidates)?;
    let references = read_tokens(&args.references)?;
    let options = BleuOptions { max_n: args.max_n, weights: None, smoothing: args.smoothing };
    let report = bleu_corpus(&candidates, &references, &options)?;
    println!("{report}");
    println!("score = {:.6}", report.bleu);
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Training-log CSV files to merge
    #[arg(long, num_args = 1.., required = true)]
    pub logs: Vec<PathBuf>,
    /// Merged CSV output
    #[arg(long)]
    pub output: PathBuf,
    /// Overwrite an existing output file
    #[arg(long)]
    pub force: bool,
}

const LOG_HEADER: &str = "epoch,train_loss,valid_loss,seconds,run_label";

/// Merge per-run training logs into one CSV keyed by run label, ready for
/// loss-curve plotting.
pub fn report(args: &ReportArgs) -> Result<()> {
    ensure_writable(&args.output, args.force)?;
    let mut merged = String::from(LOG_HEADER);
    merged.push('\n');
    let mut labels = BTreeSet::new();
    let mut rows = 0usize;
    for path in &args.logs {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(Error::MalformedFile {
                kind: "training log",
                detail: format!("{}: missing header `{LOG_HEADER}`", path.display()),
            });
        }
        for line in lines {
            if line.is_empty() {
                continue;
            }
            // The label is the last field and may contain commas.
            let fields: Vec<&str> = line.splitn(5, ',').collect();
            let well_formed = fields.len() == 5
                && fields[0].parse::<usize>().is_ok()
                && fields[1].parse::<f64>().is_ok()
                && fields[2].parse::<f64>().is_ok()
                && fields[3].parse::<f64>().is_ok();
            if !well_formed {
                return Err(Error::MalformedFile {
                    kind: "training log",
                    detail: format!("{}: bad row {line:?}", path.display()),
                });
            }
            labels.insert(fields[4].to_string());
            merged.push_str(line);
            merged.push('\n');
            rows += 1;
        }
    }
    create_parent(&args.output)?;
    std::fs::write(&args.output, merged)?;
    println!("{rows} rows from {} runs -> {}", labels.len(), args.output.display());
    Ok(())
}
