//! Greedy autoregressive translation.
//!
//! Each step re-runs the full decoder over the generated prefix; there is
//! no incremental state cache, so a step's distribution is identical to
//! what a from-scratch rerun of the same prefix would produce.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ForwardMode, IdBatch, TransformerModel};
use crate::preprocess::{normalize_punctuation, tokenize};
use crate::tensor::Scalar;
use crate::vocab::{Vocabulary, BOS_ID, EOS_ID, PAD_ID};

/// Why generation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Eos,
    MaxLen,
}

#[derive(Debug, Clone)]
pub struct TranslationResult {
    pub source_tokens: Vec<String>,
    /// Generated tokens with pad/bos/eos removed; unknown tokens surface
    /// as the literal unk spelling.
    pub output_tokens: Vec<String>,
    /// Ids matching `output_tokens` one to one.
    pub output_ids: Vec<u32>,
    /// Softmax probability of the chosen token at every generation step,
    /// including a final eos step, so this can be longer than the output.
    pub probs: Vec<f64>,
    pub stop: StopReason,
}

/// Translate one tokenized sentence by repeated argmax decoding.
///
/// `max_len` caps the number of generated tokens; `None` uses
/// min(max_seq_len, 2 * source length + 5). Either way the cap stays below
/// max_seq_len because the bos-seeded decoder input is one longer than the
/// generated sequence. Argmax ties break toward the lowest id.
pub fn greedy_translate<E: Scalar>(
    model: &TransformerModel<E>,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    source_tokens: &[String],
    max_len: Option<usize>,
) -> Result<TranslationResult> {
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
    let src_ids = src_vocab.encode(source_tokens, true);
    if src_ids.len() > model.config.max_seq_len {
        return Err(Error::invalid_input(format!(
            "encoded source length {} exceeds max_seq_len {}",
            src_ids.len(),
            model.config.max_seq_len
        )));
    }
    let hard_cap = model.config.max_seq_len - 1;
    let cap = max_len
        .unwrap_or_else(|| model.config.max_seq_len.min(2 * source_tokens.len() + 5))
        .min(hard_cap);

    let src = IdBatch::new(src_ids.clone(), 1, src_ids.len());
    let enc_out = model.encode(&src, &mut ForwardMode::Eval)?;

    let mut generated: Vec<u32> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut stop = StopReason::MaxLen;
    while generated.len() < cap {
        let mut dec_ids = Vec::with_capacity(1 + generated.len());
        dec_ids.push(BOS_ID);
        dec_ids.extend_from_slice(&generated);
        let len = dec_ids.len();
        let dec_in = IdBatch::new(dec_ids, 1, len);
        let logits = model.decode(&dec_in, &enc_out, &src, &mut ForwardMode::Eval)?;
        let vocab = model.config.tgt_vocab_size;
        let last = &logits.data()[(len - 1) * vocab..len * vocab];
        let (id, prob) = argmax_with_prob(last);
        generated.push(id);
        probs.push(prob);
        if id == EOS_ID {
            stop = StopReason::Eos;
            break;
        }
    }

    let output_ids: Vec<u32> = generated
        .iter()
        .copied()
        .filter(|&id| id != PAD_ID && id != BOS_ID && id != EOS_ID)
        .collect();
    let output_tokens = tgt_vocab.decode(&generated, true)?;
    debug_assert_eq!(output_tokens.len(), output_ids.len());
    Ok(TranslationResult {
        source_tokens: source_tokens.to_vec(),
        output_tokens,
        output_ids,
        probs,
        stop,
    })
}

/// Lowest-id argmax over one logit row plus that token's softmax probability.
fn argmax_with_prob<E: Scalar>(logits: &[E]) -> (u32, f64) {
    let mut best = 0usize;
    for (i, &x) in logits.iter().enumerate() {
        if x > logits[best] {
            best = i;
        }
    }
    let max = logits[best].to_f64();
    let denom: f64 = logits.iter().map(|&x| (x.to_f64() - max).exp()).sum();
    (best as u32, 1.0 / denom)
}

/// Reverse the tokenizer's punctuation detachment: closers and sentence
/// punctuation glue to the previous token, openers to the next, double
/// quotes alternate by parity.
pub fn detokenize(tokens: &[String]) -> String {
    let mut out = String::new();
    let mut quote_open = false;
    let mut glue_next = false;
    for tok in tokens {
        let is_quote = tok == "\"";
        let attach_prev = matches!(
            tok.as_str(),
            "." | "," | "!" | "?" | ";" | ":" | ")" | "]"
        ) || (is_quote && quote_open);
        if !out.is_empty() && !attach_prev && !glue_next {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = matches!(tok.as_str(), "(" | "[") || (is_quote && !quote_open);
        if is_quote {
            quote_open = !quote_open;
        }
    }
    out
}

/// Translate raw text lines, one output line per input line. A line that
/// fails (for example an overlong source) logs a warning and produces an
/// empty output line so alignment with the input is preserved.
pub fn translate_lines<E: Scalar>(
    model: &TransformerModel<E>,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    lines: &[String],
) -> Vec<String> {
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let tokens = tokenize(&normalize_punctuation(line));
            match greedy_translate(model, src_vocab, tgt_vocab, &tokens, None) {
                Ok(result) => detokenize(&result.output_tokens),
                Err(err) => {
                    log::warn!("line {}: {err}; emitting empty line", i + 1);
                    String::new()
                }
            }
        })
        .collect()
}

/// File-to-file wrapper around [`translate_lines`].
pub fn translate_file<E: Scalar>(
    model: &TransformerModel<E>,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    input: &Path,
    output: &Path,
) -> Result<()> {
    let reader = BufReader::new(std::fs::File::open(input)?);
    let lines = reader.lines().collect::<std::io::Result<Vec<String>>>()?;
    let translated = translate_lines(model, src_vocab, tgt_vocab, &lines);
    let mut writer = BufWriter::new(std::fs::File::create(output)?);
    for line in &translated {
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}

/// Per-step next-token distribution check used by tests: the logits the
/// model assigns at position t of the final prefix must match the logits
/// that produced token t during generation.
#[cfg(test)]
fn replay_logits<E: Scalar>(
    model: &TransformerModel<E>,
    src: &IdBatch,
    prefix: &[u32],
) -> Vec<E> {
    let enc_out = model.encode(src, &mut ForwardMode::Eval).unwrap();
    let mut dec_ids = vec![BOS_ID];
    dec_ids.extend_from_slice(prefix);
    let len = dec_ids.len();
    let dec_in = IdBatch::new(dec_ids, 1, len);
    let logits = model
        .decode(&dec_in, &enc_out, src, &mut ForwardMode::Eval)
        .unwrap();
    let vocab = model.config.tgt_vocab_size;
    logits.data()[(len - 1) * vocab..len * vocab].to_vec()
}
