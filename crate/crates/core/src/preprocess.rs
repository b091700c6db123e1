//! Parallel-corpus ingestion and cleaning.
//!
//! The pipeline is: read aligned files, normalize punctuation, tokenize,
//! clean (length and ratio filters), deduplicate, then split or mix.
//! Stage counts are tracked in [`CorpusStats`] and never increase from one
//! stage to the next.
//!
//! Normalization rule table (applied per character, then whitespace runs
//! collapse to single spaces and the ends are trimmed):
//!
//! | input                   | output |
//! |-------------------------|--------|
//! | `“ ” „`                 | `"`    |
//! | `‘ ’ ‚`                 | `'`    |
//! | `–` (en) `—` (em) dash  | `-`    |
//! | no-break space          | space  |
//! | `…`                     | `...`  |
//!
//! The tokenizer splits on whitespace and then detaches the punctuation
//! characters `. , ! ? ; : " ( ) [ ]` from word edges, one token per
//! character. Interior punctuation (hyphens, apostrophes, dots inside
//! abbreviations) stays attached; a trailing abbreviation dot detaches
//! like any sentence-final dot. No lowercasing anywhere.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Which corpus a pair came from; survives mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    InDomain,
    GeneralDomain,
}

/// One aligned sentence pair, already tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub origin: Origin,
}

/// Pair counts observed at each pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusStats {
    pub raw: usize,
    pub preprocessed: usize,
    pub cleaned: usize,
    pub unique: usize,
}

impl CorpusStats {
    fn all(n: usize) -> CorpusStats {
        CorpusStats { raw: n, preprocessed: n, cleaned: n, unique: n }
    }
}

impl fmt::Display for CorpusStats {
    /// `key<TAB>value` lines, one pipeline stage per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "raw\t{}", self.raw)?;
        writeln!(f, "preprocessed\t{}", self.preprocessed)?;
        writeln!(f, "cleaned\t{}", self.cleaned)?;
        writeln!(f, "unique\t{}", self.unique)
    }
}

/// Length and ratio filters for [`ParallelCorpus::clean`].
#[derive(Debug, Clone, Copy)]
pub struct CleanConfig {
    pub min_len: usize,
    pub max_len: usize,
    /// Pairs with max(|s|,|t|)/min(|s|,|t|) strictly above this are dropped.
    pub max_ratio: f64,
}

impl Default for CleanConfig {
    fn default() -> CleanConfig {
        CleanConfig { min_len: 1, max_len: 80, max_ratio: 9.0 }
    }
}

/// Sizes and seed for the train/valid/test split.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub valid_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

/// An ordered list of sentence pairs plus its pipeline stage counts.
#[derive(Debug, Clone)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub stats: CorpusStats,
}

impl ParallelCorpus {
    /// Wrap already-tokenized pairs; all stage counts start at the pair count.
    pub fn from_pairs(pairs: Vec<SentencePair>) -> ParallelCorpus {
        let stats = CorpusStats::all(pairs.len());
        ParallelCorpus { pairs, stats }
    }

    /// Read two line-aligned files, normalizing and tokenizing each line.
    /// Line i of the source file pairs with line i of the target file.
    pub fn read_files(
        source_path: &Path,
        target_path: &Path,
        origin: Origin,
    ) -> Result<ParallelCorpus> {
        let source = std::fs::read_to_string(source_path)?;
        let target = std::fs::read_to_string(target_path)?;
        let src_lines: Vec<&str> = source.lines().collect();
        let tgt_lines: Vec<&str> = target.lines().collect();
        if src_lines.len() != tgt_lines.len() {
            return Err(Error::invalid_input(format!(
                "parallel files are not line-aligned: {} has {} lines, {} has {}",
                source_path.display(),
                src_lines.len(),
                target_path.display(),
                tgt_lines.len()
            )));
        }
        let pairs: Vec<SentencePair> = src_lines
            .iter()
            .zip(&tgt_lines)
            .map(|(s, t)| SentencePair {
                source: tokenize(&normalize_punctuation(s)),
                target: tokenize(&normalize_punctuation(t)),
                origin,
            })
            .collect();
        Ok(ParallelCorpus::from_pairs(pairs))
    }

    /// Write the corpus back out as two aligned token-per-space files.
    pub fn write_files(&self, source_path: &Path, target_path: &Path) -> Result<()> {
        for (path, side) in [(source_path, 0), (target_path, 1)] {
            let mut w = BufWriter::new(std::fs::File::create(path)?);
            for pair in &self.pairs {
                let tokens = if side == 0 { &pair.source } else { &pair.target };
                writeln!(w, "{}", tokens.join(" "))?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Drop pairs with an empty side, a side outside `[min_len, max_len]`,
    /// or a length ratio above `max_ratio`. Idempotent.
    pub fn clean(mut self, cfg: &CleanConfig) -> ParallelCorpus {
        self.pairs.retain(|p| {
            let (s, t) = (p.source.len(), p.target.len());
            if s < cfg.min_len.max(1) || t < cfg.min_len.max(1) {
                return false;
            }
            if s > cfg.max_len || t > cfg.max_len {
                return false;
            }
            let ratio = s.max(t) as f64 / s.min(t) as f64;
            ratio <= cfg.max_ratio
        });
        self.stats.cleaned = self.pairs.len();
        self.stats.unique = self.pairs.len();
        self
    }

    /// Keep the first occurrence of each exact (source, target) pair,
    /// preserving order otherwise. Idempotent.
    pub fn dedup(mut self) -> ParallelCorpus {
        let mut seen = HashSet::new();
        self.pairs.retain(|p| {
            // Tokens never contain whitespace, so the joined form is unique.
            let key = format!("{}\t{}", p.source.join(" "), p.target.join(" "));
            seen.insert(key)
        });
        self.stats.unique = self.pairs.len();
        self
    }

    /// Seeded shuffle, then carve off the last `test_size` pairs as test and
    /// the `valid_size` before them as valid; the rest is train.
    pub fn split(self, spec: &SplitSpec) -> Result<(ParallelCorpus, ParallelCorpus, ParallelCorpus)> {
        let held_out = spec.valid_size + spec.test_size;
        if held_out >= self.pairs.len() {
            return Err(Error::invalid_config(format!(
                "split sizes valid={} test={} leave no training data for a corpus of {} pairs",
                spec.valid_size,
                spec.test_size,
                self.pairs.len()
            )));
        }
        let mut pairs = self.pairs;
        let mut rng = Rng::seed_from(spec.seed);
        rng.shuffle(&mut pairs);
        let test = pairs.split_off(pairs.len() - spec.test_size);
        let valid = pairs.split_off(pairs.len() - spec.valid_size);
        Ok((
            ParallelCorpus::from_pairs(pairs),
            ParallelCorpus::from_pairs(valid),
            ParallelCorpus::from_pairs(test),
        ))
    }

    /// Concatenate two corpora, keeping origin tags and summing stage
    /// counts. No shuffle happens here; training reshuffles every epoch.
    pub fn mix(mut self, mut other: ParallelCorpus) -> ParallelCorpus {
        self.pairs.append(&mut other.pairs);
        self.stats = CorpusStats {
            raw: self.stats.raw + other.stats.raw,
            preprocessed: self.stats.preprocessed + other.stats.preprocessed,
            cleaned: self.stats.cleaned + other.stats.cleaned,
            unique: self.stats.unique + other.stats.unique,
        };
        self
    }
}

/// Normalize quote, dash, space and ellipsis characters, then collapse
/// whitespace runs and trim. Idempotent and lossy by design.
pub fn normalize_punctuation(line: &str) -> String {
    let mut mapped = String::with_capacity(line.len());
    for c in line.chars() {
        match c {
            '\u{201C}' | '\u{201D}' | '\u{201E}' => mapped.push('"'),
            '\u{2018}' | '\u{2019}' | '\u{201A}' => mapped.push('\''),
            '\u{2013}' | '\u{2014}' => mapped.push('-'),
            '\u{00A0}' => mapped.push(' '),
            '\u{2026}' => mapped.push_str("..."),
            _ => mapped.push(c),
        }
    }
    let mut out = String::with_capacity(mapped.len());
    for word in mapped.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

const DETACH: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')', '[', ']'];

/// Whitespace split plus edge-punctuation detachment. Idempotent when fed
/// its own space-joined output.
pub fn tokenize(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in line.split_whitespace() {
        let mut prefix = Vec::new();
        let mut core = word;
        while let Some(c) = core.chars().next() {
            if DETACH.contains(&c) {
                prefix.push(c.to_string());
                core = &core[c.len_utf8()..];
            } else {
                break;
            }
        }
        let mut suffix = Vec::new();
        while let Some(c) = core.chars().next_back() {
            if DETACH.contains(&c) {
                suffix.push(c.to_string());
                core = &core[..core.len() - c.len_utf8()];
            } else {
                break;
            }
        }
        tokens.extend(prefix);
        if !core.is_empty() {
            tokens.push(core.to_string());
        }
        tokens.extend(suffix.into_iter().rev());
    }
    tokens
}
