//! Optimization loop: batching with teacher forcing, Adam, early stopping,
//! and the corpus-mixing experiment harness.
//!
//! Everything here is deterministic for a fixed seed on a single thread:
//! one RNG stream drives both the per-epoch shuffle and dropout, so a rerun
//! reproduces parameter trajectories bitwise.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::bleu::{bleu_corpus, BleuOptions};
use crate::decode::greedy_translate;
use crate::error::{Error, Result};
use crate::model::{ForwardMode, IdBatch, ModelConfig, TransformerModel};
use crate::preprocess::ParallelCorpus;
use crate::rng::Rng;
use crate::tensor::{cross_entropy, Scalar, Tensor};
use crate::vocab::{Vocabulary, PAD_ID};

/// Training hyperparameters. Defaults: 5 epochs, lr 5e-4, batch 64,
/// dropout 0.1, early stopping with patience 3, Adam(0.9, 0.999, 1e-9),
/// global-norm gradient clipping at 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub early_stopping: bool,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            learning_rate: 5e-4,
            batch_size: 64,
            dropout: 0.1,
            early_stopping: true,
            patience: 3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-9,
            grad_clip: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid_config("epochs must be at least 1"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::invalid_config(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid_config("batch size must be at least 1"));
        }
        if self.patience < 1 {
            return Err(Error::invalid_config("patience must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid_config(format!(
                "dropout must satisfy 0 <= p < 1, got {}",
                self.dropout
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::invalid_config(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(Error::invalid_config("eps must be positive and finite"));
        }
        if let Some(clip) = self.grad_clip {
            if !clip.is_finite() || clip <= 0.0 {
                return Err(Error::invalid_config(format!(
                    "gradient clip must be positive and finite, got {clip}"
                )));
            }
        }
        Ok(())
    }
}

/// One finished epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub seconds: f64,
}

/// Loss history of one run, writable as CSV for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub run_label: String,
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn new(run_label: impl Into<String>) -> TrainLog {
        TrainLog { run_label: run_label.into(), records: Vec::new() }
    }

    /// Epoch indices must strictly increase and losses must be finite.
    pub fn push(&mut self, record: EpochRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                record.epoch > last.epoch,
                "epoch {} recorded after {}",
                record.epoch,
                last.epoch
            );
        }
        assert!(
            record.train_loss.is_finite() && record.valid_loss.is_finite(),
            "non-finite loss in epoch {}",
            record.epoch
        );
        self.records.push(record);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss,seconds,run_label\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{:.3},{}\n",
                r.epoch, r.train_loss, r.valid_loss, r.seconds, self.run_label
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// One teacher-forced batch. `dec_in` is the bos-prefixed decoder input and
/// `labels` the eos-suffixed targets: `labels` position t is the token the
/// model must predict after reading `dec_in[0..=t]`. All three sides are
/// padded with the pad id to their batch-local maximum length.
#[derive(Debug, Clone)]
pub struct Batch {
    pub src: IdBatch,
    pub dec_in: IdBatch,
    pub labels: IdBatch,
}

impl Batch {
    /// Label positions that are real tokens rather than padding.
    pub fn token_count(&self) -> usize {
        self.labels.ids.iter().filter(|&&id| id != PAD_ID).count()
    }
}

/// Encode, shuffle, and chunk a corpus into batches. Pairs where either
/// side exceeds `max_seq_len - 2` tokens (bos and eos must still fit) are
/// skipped with a warning. Call once per epoch with a live RNG to get a
/// fresh shuffle.
pub fn make_batches(
    corpus: &ParallelCorpus,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    max_seq_len: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let limit = max_seq_len.saturating_sub(2);
    let mut encoded: Vec<(Vec<u32>, Vec<u32>)> = Vec::with_capacity(corpus.pairs.len());
    for (i, pair) in corpus.pairs.iter().enumerate() {
        if pair.source.len() > limit || pair.target.len() > limit {
            log::warn!(
                "pair {}: length {}/{} exceeds the usable maximum {limit}; skipped",
                i + 1,
                pair.source.len(),
                pair.target.len()
            );
            continue;
        }
        encoded.push((
            src_vocab.encode(&pair.source, true),
            tgt_vocab.encode(&pair.target, true),
        ));
    }
    rng.shuffle(&mut encoded);
    encoded
        .chunks(batch_size)
        .map(|chunk| {
            let src_rows: Vec<Vec<u32>> = chunk.iter().map(|(s, _)| s.clone()).collect();
            let dec_rows: Vec<Vec<u32>> =
                chunk.iter().map(|(_, t)| t[..t.len() - 1].to_vec()).collect();
            let label_rows: Vec<Vec<u32>> = chunk.iter().map(|(_, t)| t[1..].to_vec()).collect();
            Batch {
                src: IdBatch::pad_rows(&src_rows, PAD_ID),
                dec_in: IdBatch::pad_rows(&dec_rows, PAD_ID),
                labels: IdBatch::pad_rows(&label_rows, PAD_ID),
            }
        })
        .collect()
}

/// One bias-corrected Adam update for a single parameter, returning the new
/// parameter values. `grad_scale` premultiplies the gradient (1.0 when no
/// clipping applies). All arithmetic stays in `E` so that, for example, the
/// very first step moves a parameter by exactly `lr * sign(g)` when eps
/// vanishes against 1 at that precision.
#[allow(clippy::too_many_arguments)]
pub fn adam_update<E: Scalar>(
    param: &[E],
    grad: &[E],
    m: &mut [E],
    v: &mut [E],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    grad_scale: f64,
) -> Vec<E> {
    assert_eq!(param.len(), grad.len(), "parameter/gradient length mismatch");
    assert_eq!(param.len(), m.len());
    assert_eq!(param.len(), v.len());
    let b1 = E::from_f64(beta1);
    let b2 = E::from_f64(beta2);
    let lr = E::from_f64(lr);
    let eps = E::from_f64(eps);
    let scale = E::from_f64(grad_scale);
    let one = E::one();
    let c1 = one - b1.powi(step as i32);
    let c2 = one - b2.powi(step as i32);
    param
        .iter()
        .zip(grad)
        .zip(m.iter_mut().zip(v.iter_mut()))
        .map(|((&p, &g), (m_i, v_i))| {
            let g = g * scale;
            *m_i = b1 * *m_i + (one - b1) * g;
            *v_i = b2 * *v_i + (one - b2) * g * g;
            let m_hat = *m_i / c1;
            let v_hat = *v_i / c2;
            p - lr * m_hat / (v_hat.sqrt() + eps)
        })
        .collect()
}

/// Adam with optional global-norm gradient clipping. Moment state is keyed
/// by parameter name, so it survives the tensor replacement each step does.
pub struct Adam<E: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: Option<f64>,
    /// Steps taken; exposed with the moments for checkpointing.
    pub step_count: u64,
    pub m: HashMap<String, Vec<E>>,
    pub v: HashMap<String, Vec<E>>,
}

impl<E: Scalar> Adam<E> {
    pub fn from_config(cfg: &TrainConfig) -> Adam<E> {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            grad_clip: cfg.grad_clip,
            step_count: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// Apply one step over every model parameter, replacing the parameter
    /// tensors. A missing gradient counts as zero; a non-finite gradient
    /// aborts with a diagnostic naming the parameter.
    pub fn step(&mut self, model: &mut TransformerModel<E>) -> Result<()> {
        let mut grads: Vec<Vec<E>> = Vec::new();
        let mut sq_norm = 0.0f64;
        for (name, param) in model.parameters() {
            let grad = param
                .grad()
                .unwrap_or_else(|| vec![E::zero(); param.numel()]);
            for &g in &grad {
                let g = g.to_f64();
                if !g.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite gradient in {name}"
                    )));
                }
                sq_norm += g * g;
            }
            grads.push(grad);
        }
        let norm = sq_norm.sqrt();
        let grad_scale = match self.grad_clip {
            Some(clip) if norm > clip => clip / norm,
            _ => 1.0,
        };
        self.step_count += 1;
        for ((name, slot), grad) in model.parameters_mut().into_iter().zip(&grads) {
            let n = slot.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![E::zero(); n]);
            let v = self.v.entry(name).or_insert_with(|| vec![E::zero(); n]);
            let next = adam_update(
                slot.data(),
                grad,
                m,
                v,
                self.step_count,
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                grad_scale,
            );
            let shape = slot.shape().to_vec();
            *slot = Tensor::param(&shape, next);
        }
        Ok(())
    }
}

/// Early-stopping bookkeeping: stop after `patience` consecutive epochs
/// without strict improvement.
#[derive(Debug)]
struct PatienceTracker {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    since_improvement: usize,
}

impl PatienceTracker {
    fn new(patience: usize) -> PatienceTracker {
        PatienceTracker {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            since_improvement: 0,
        }
    }

    /// Returns (improved, should_stop).
    fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.since_improvement = 0;
            (true, false)
        } else {
            self.since_improvement += 1;
            (false, self.since_improvement >= self.patience)
        }
    }
}

/// How a training run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStop {
    /// Ran the full epoch budget.
    Completed,
    /// Validation loss stalled; stopped after this epoch.
    EarlyStopped { epoch: usize },
    /// Loss or gradients went non-finite during this epoch; the returned
    /// model is the last good snapshot.
    Diverged { epoch: usize },
}

impl fmt::Display for TrainStop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainStop::Completed => write!(f, "completed"),
            TrainStop::EarlyStopped { epoch } => write!(f, "early stop after epoch {epoch}"),
            TrainStop::Diverged { epoch } => write!(f, "diverged in epoch {epoch}"),
        }
    }
}

pub struct TrainOutcome<E: Scalar> {
    pub model: TransformerModel<E>,
    pub log: TrainLog,
    pub stop: TrainStop,
}

type Snapshot<E> = Vec<(String, Vec<usize>, Vec<E>)>;

fn snapshot<E: Scalar>(model: &TransformerModel<E>) -> Snapshot<E> {
    model
        .parameters()
        .into_iter()
        .map(|(name, t)| (name, t.shape().to_vec(), t.data().to_vec()))
        .collect()
}

fn restore<E: Scalar>(model: &mut TransformerModel<E>, snap: &Snapshot<E>) {
    for ((name, slot), (snap_name, shape, data)) in
        model.parameters_mut().into_iter().zip(snap)
    {
        assert_eq!(&name, snap_name, "snapshot order drifted");
        *slot = Tensor::param(shape, data.clone());
    }
}

/// Mean cross-entropy per non-pad token over prebuilt batches, dropout off.
fn batch_set_loss<E: Scalar>(model: &TransformerModel<E>, batches: &[Batch]) -> Result<f64> {
    let mut total_loss = 0.0f64;
    let mut total_tokens = 0usize;
    for batch in batches {
        let (loss, tokens) = batch_loss(model, batch, &mut ForwardMode::Eval)?;
        total_loss += loss * tokens as f64;
        total_tokens += tokens;
    }
    if total_tokens == 0 {
        return Err(Error::invalid_input("no usable tokens to evaluate"));
    }
    Ok(total_loss / total_tokens as f64)
}

/// Forward one batch and return (mean loss over non-pad tokens, token
/// count). In training mode the graph is kept alive through the returned
/// tensor; this helper backpropagates before returning when asked to.
fn batch_loss<E: Scalar>(
    model: &TransformerModel<E>,
    batch: &Batch,
    mode: &mut ForwardMode<'_>,
) -> Result<(f64, usize)> {
    let logits = model.forward(&batch.src, &batch.dec_in, mode)?;
    let rows = batch.labels.rows * batch.labels.cols;
    let flat = logits.reshape(&[rows, model.config.tgt_vocab_size]);
    let loss = cross_entropy(&flat, &batch.labels.ids, PAD_ID);
    let value = loss.item().to_f64();
    if matches!(mode, ForwardMode::Train(_)) && value.is_finite() {
        loss.backward();
    }
    Ok((value, batch.token_count()))
}

/// Mean validation loss of `model` on `corpus`, dropout off.
pub fn evaluate_loss<E: Scalar>(
    model: &TransformerModel<E>,
    corpus: &ParallelCorpus,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    batch_size: usize,
) -> Result<f64> {
    let mut rng = Rng::seed_from(0);
    let batches = make_batches(
        corpus,
        src_vocab,
        tgt_vocab,
        model.config.max_seq_len,
        batch_size,
        &mut rng,
    );
    batch_set_loss(model, &batches)
}

/// Train `model` on `train_corpus`, validating each epoch on
/// `valid_corpus`. The model's dropout is overridden by `cfg.dropout` for
/// the run. With early stopping enabled the best-validation parameters are
/// restored at the end, so the returned model is never worse on validation
/// than the best epoch observed. On divergence the last good snapshot is
/// returned with `TrainStop::Diverged`.
pub fn train<E: Scalar>(
    mut model: TransformerModel<E>,
    train_corpus: &ParallelCorpus,
    valid_corpus: &ParallelCorpus,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    cfg: &TrainConfig,
    run_label: &str,
) -> Result<TrainOutcome<E>> {
    cfg.validate()?;
    if src_vocab.size() != model.config.src_vocab_size
        || tgt_vocab.size() != model.config.tgt_vocab_size
    {
        return Err(Error::invalid_config(format!(
            "vocabulary sizes {}/{} do not match the model's {}/{}",
            src_vocab.size(),
            tgt_vocab.size(),
            model.config.src_vocab_size,
            model.config.tgt_vocab_size
        )));
    }
    model.config.dropout_p = cfg.dropout;

    // Validation batches are fixed across epochs; their shuffle order does
    // not matter because the loss is a token-weighted mean.
    let mut valid_rng = Rng::seed_from(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let valid_batches = make_batches(
        valid_corpus,
        src_vocab,
        tgt_vocab,
        model.config.max_seq_len,
        cfg.batch_size,
        &mut valid_rng,
    );
    if valid_batches.is_empty() {
        return Err(Error::invalid_input("validation corpus has no usable pairs"));
    }

    let mut rng = Rng::seed_from(cfg.seed);
    let mut optimizer = Adam::<E>::from_config(cfg);
    let mut log = TrainLog::new(run_label);
    let mut patience = PatienceTracker::new(cfg.patience);
    let mut best: Option<Snapshot<E>> = None;
    let initial = snapshot(&model);
    let mut stop = TrainStop::Completed;

    'epochs: for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let batches = make_batches(
            train_corpus,
            src_vocab,
            tgt_vocab,
            model.config.max_seq_len,
            cfg.batch_size,
            &mut rng,
        );
        if batches.is_empty() {
            return Err(Error::invalid_input("training corpus has no usable pairs"));
        }

        let mut loss_sum = 0.0f64;
        let mut token_sum = 0usize;
        for batch in &batches {
            model.clear_grads();
            let (loss, tokens) = batch_loss(&model, batch, &mut ForwardMode::Train(&mut rng))?;
            if !loss.is_finite() {
                log::error!("epoch {epoch}: training loss went non-finite ({loss})");
                restore(&mut model, best.as_ref().unwrap_or(&initial));
                stop = TrainStop::Diverged { epoch };
                break 'epochs;
            }
            if let Err(err) = optimizer.step(&mut model) {
                log::error!("epoch {epoch}: {err}");
                restore(&mut model, best.as_ref().unwrap_or(&initial));
                stop = TrainStop::Diverged { epoch };
                break 'epochs;
            }
            loss_sum += loss * tokens as f64;
            token_sum += tokens;
        }
        let train_loss = loss_sum / token_sum as f64;

        let valid_loss = batch_set_loss(&model, &valid_batches)?;
        if !valid_loss.is_finite() {
            log::error!("epoch {epoch}: validation loss went non-finite ({valid_loss})");
            restore(&mut model, best.as_ref().unwrap_or(&initial));
            stop = TrainStop::Diverged { epoch };
            break;
        }
        let seconds = start.elapsed().as_secs_f64();
        log.push(EpochRecord { epoch, train_loss, valid_loss, seconds });
        log::info!(
            "[{run_label}] epoch {epoch}: train {train_loss:.4} valid {valid_loss:.4} ({seconds:.1}s)"
        );

        let (improved, should_stop) = patience.observe(epoch, valid_loss);
        if improved {
            best = Some(snapshot(&model));
        }
        if cfg.early_stopping && should_stop {
            stop = TrainStop::EarlyStopped { epoch };
            break;
        }
    }

    if cfg.early_stopping && !matches!(stop, TrainStop::Diverged { .. }) {
        if let Some(best) = &best {
            restore(&mut model, best);
        }
    }
    Ok(TrainOutcome { model, log, stop })
}

/// One (composition, config) training run inside an experiment.
pub struct ExperimentRun {
    pub label: String,
    /// Size of the training corpus this run saw; for the mixed composition
    /// this is the sum of the base and general corpus sizes.
    pub train_pairs: usize,
    pub epochs_requested: usize,
    pub stop: TrainStop,
    /// Corpus-level BLEU on the shared test set, in [0, 1].
    pub test_bleu: f64,
    pub log: TrainLog,
}

/// Comparison of dataset compositions at several epoch budgets, all scored
/// on the same validation and test sets.
pub struct ExperimentReport {
    pub runs: Vec<ExperimentRun>,
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset\tepochs\tstop\ttest BLEU")?;
        for run in &self.runs {
            writeln!(
                f,
                "{}\t{}\t{}\t{:.1}",
                run.label,
                run.epochs_requested,
                run.stop,
                run.test_bleu * 100.0
            )?;
        }
        Ok(())
    }
}

/// Greedy-translate every test source and score corpus BLEU against the
/// references. Untranslatable lines (overlong sources) count as empty
/// candidates rather than aborting the evaluation.
pub fn test_bleu<E: Scalar>(
    model: &TransformerModel<E>,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    test: &ParallelCorpus,
) -> Result<f64> {
    let mut candidates = Vec::with_capacity(test.pairs.len());
    let mut references = Vec::with_capacity(test.pairs.len());
    for pair in &test.pairs {
        let candidate = match greedy_translate(model, src_vocab, tgt_vocab, &pair.source, None) {
            Ok(result) => result.output_tokens,
            Err(err) => {
                log::warn!("test sentence skipped from candidate side: {err}");
                Vec::new()
            }
        };
        candidates.push(candidate);
        references.push(pair.target.clone());
    }
    Ok(bleu_corpus(&candidates, &references, &BleuOptions::default())?.bleu)
}

/// Train one model per (composition, config) pair and score each on the
/// shared test set. Compositions are the base corpus alone and, when
/// `general` is given, base mixed with the general-domain corpus. Each
/// run builds its vocabularies from its own training corpus only; the
/// model template's vocabulary sizes are overridden accordingly.
pub fn run_experiment<E: Scalar>(
    base: &ParallelCorpus,
    general: Option<&ParallelCorpus>,
    valid: &ParallelCorpus,
    test: &ParallelCorpus,
    model_template: &ModelConfig,
    configs: &[TrainConfig],
    vocab_min_freq: u64,
) -> Result<ExperimentReport> {
    let mut compositions: Vec<(String, ParallelCorpus)> =
        vec![("base".to_string(), base.clone())];
    if let Some(general) = general {
        compositions.push(("mixed".to_string(), base.clone().mix(general.clone())));
    }

    let mut runs = Vec::new();
    for (label, corpus) in &compositions {
        let src_vocab =
            Vocabulary::build(corpus.pairs.iter().map(|p| p.source.as_slice()), vocab_min_freq)?;
        let tgt_vocab =
            Vocabulary::build(corpus.pairs.iter().map(|p| p.target.as_slice()), vocab_min_freq)?;
        for cfg in configs {
            let mut model_cfg = model_template.clone();
            model_cfg.src_vocab_size = src_vocab.size();
            model_cfg.tgt_vocab_size = tgt_vocab.size();
            model_cfg.dropout_p = cfg.dropout;
            let run_label = format!("{label}-e{}", cfg.epochs);
            log::info!("experiment run {run_label}: {} training pairs", corpus.pairs.len());
            let model =
                TransformerModel::<E>::new(model_cfg, &mut Rng::seed_from(cfg.seed))?;
            let outcome = train(model, corpus, valid, &src_vocab, &tgt_vocab, cfg, &run_label)?;
            let bleu = test_bleu(&outcome.model, &src_vocab, &tgt_vocab, test)?;
            runs.push(ExperimentRun {
                label: label.clone(),
                train_pairs: corpus.pairs.len(),
                epochs_requested: cfg.epochs,
                stop: outcome.stop,
                test_bleu: bleu,
                log: outcome.log,
            });
        }
    }
    Ok(ExperimentReport { runs })
}
