//! Corpus-level BLEU with clipped n-gram precision and brevity penalty.
//!
//! Aggregation is corpus-level: matched and total n-gram counts are summed
//! over all sentence pairs before dividing, and the brevity penalty uses
//! total candidate and reference lengths. One reference per candidate.
//!
//! Orders with no candidate n-grams at all (every candidate shorter than n)
//! have an undefined precision. They are excluded and the remaining weights
//! are renormalized, which keeps the perfect-match identity bleu(x, x) == 1
//! for short sentences. A defined precision of zero still forces an overall
//! score of 0: no smoothing unless explicitly enabled.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Scoring knobs: maximum n-gram order, weights, optional smoothing.
#[derive(Debug, Clone)]
pub struct BleuOptions {
    pub max_n: usize,
    /// One weight per order, summing to 1. `None` means uniform 1/max_n.
    pub weights: Option<Vec<f64>>,
    /// Replace zero matched counts with (matched+1)/(total+1) on defined
    /// orders. Off by default.
    pub smoothing: bool,
}

impl Default for BleuOptions {
    fn default() -> BleuOptions {
        BleuOptions { max_n: 4, weights: None, smoothing: false }
    }
}

/// Everything the score is made of, for reporting and verification.
#[derive(Debug, Clone)]
pub struct BleuReport {
    /// Final score in [0, 1].
    pub bleu: f64,
    /// Clipped precision per order (index n-1); `None` when no candidate
    /// n-grams of that order exist.
    pub precisions: Vec<Option<f64>>,
    pub matched: Vec<u64>,
    pub total: Vec<u64>,
    pub brevity_penalty: f64,
    /// Total candidate length c.
    pub candidate_len: usize,
    /// Total reference length r.
    pub reference_len: usize,
    pub weights: Vec<f64>,
}

impl fmt::Display for BleuReport {
    /// One line per field; scores are conventionally multiplied by 100.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BLEU = {:.1}", self.bleu * 100.0)?;
        let labels: Vec<String> = (1..=self.precisions.len()).map(|n| format!("p{n}")).collect();
        let values: Vec<String> = self
            .precisions
            .iter()
            .map(|p| match p {
                Some(p) => format!("{:.1}", p * 100.0),
                None => "-".to_string(),
            })
            .collect();
        writeln!(f, "{} = {}", labels.join("/"), values.join("/"))?;
        writeln!(f, "BP = {:.3}", self.brevity_penalty)?;
        write!(f, "c/r = {}/{}", self.candidate_len, self.reference_len)
    }
}

/// Sum of clipped n-gram matches and candidate n-gram totals over the
/// corpus. Each candidate n-gram counts at most as often as it appears in
/// the paired reference.
pub fn clipped_precision(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    n: usize,
) -> (u64, u64) {
    assert!(n >= 1, "n-gram order must be at least 1, got {n}");
    assert_eq!(
        candidates.len(),
        references.len(),
        "clipped_precision needs paired lists: {} candidates vs {} references",
        candidates.len(),
        references.len()
    );
    let mut matched = 0u64;
    let mut total = 0u64;
    for (cand, reference) in candidates.iter().zip(references) {
        if cand.len() < n {
            continue;
        }
        total += (cand.len() - n + 1) as u64;
        let mut ref_counts: HashMap<&[String], u64> = HashMap::new();
        for gram in reference.windows(n) {
            *ref_counts.entry(gram).or_insert(0) += 1;
        }
        let mut cand_counts: HashMap<&[String], u64> = HashMap::new();
        for gram in cand.windows(n) {
            *cand_counts.entry(gram).or_insert(0) += 1;
        }
        for (gram, count) in cand_counts {
            matched += count.min(ref_counts.get(gram).copied().unwrap_or(0));
        }
    }
    (matched, total)
}

/// Brevity penalty: 1 when the candidate corpus is at least as long as the
/// reference corpus, e^(1 - r/c) when shorter, and 0 in the degenerate
/// empty-candidate limit.
pub fn brevity_penalty(c: usize, r: usize) -> f64 {
    assert!(r >= 1, "reference length must be at least 1, got {r}");
    if c == 0 {
        return 0.0;
    }
    if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Corpus BLEU over paired token sequences.
pub fn bleu_corpus(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    opts: &BleuOptions,
) -> Result<BleuReport> {
    if candidates.is_empty() {
        return Err(Error::invalid_input("cannot score an empty corpus"));
    }
    if candidates.len() != references.len() {
        return Err(Error::invalid_input(format!(
            "candidate/reference count mismatch: {} vs {}",
            candidates.len(),
            references.len()
        )));
    }
    if opts.max_n < 1 {
        return Err(Error::invalid_config("max n-gram order must be at least 1"));
    }
    let weights = match &opts.weights {
        Some(w) => {
            if w.len() != opts.max_n {
                return Err(Error::invalid_config(format!(
                    "expected {} weights, got {}",
                    opts.max_n,
                    w.len()
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || w.iter().any(|&x| x < 0.0) {
                return Err(Error::invalid_config(format!(
                    "weights must be nonnegative and sum to 1, got {w:?}"
                )));
            }
            w.clone()
        }
        None => vec![1.0 / opts.max_n as f64; opts.max_n],
    };

    let candidate_len: usize = candidates.iter().map(|c| c.len()).sum();
    let reference_len: usize = references.iter().map(|r| r.len()).sum();
    if reference_len == 0 {
        return Err(Error::invalid_input("references contain no tokens"));
    }
    let bp = brevity_penalty(candidate_len, reference_len);

    let mut matched = Vec::with_capacity(opts.max_n);
    let mut total = Vec::with_capacity(opts.max_n);
    let mut precisions: Vec<Option<f64>> = Vec::with_capacity(opts.max_n);
    for n in 1..=opts.max_n {
        let (m, t) = clipped_precision(candidates, references, n);
        let p = if t == 0 {
            None
        } else if m == 0 && opts.smoothing {
            Some((m + 1) as f64 / (t + 1) as f64)
        } else {
            Some(m as f64 / t as f64)
        };
        matched.push(m);
        total.push(t);
        precisions.push(p);
    }

    // Geometric mean over defined orders with renormalized weights; a
    // defined zero precision collapses the whole score.
    let defined_weight: f64 = precisions
        .iter()
        .zip(&weights)
        .filter_map(|(p, &w)| p.map(|_| w))
        .sum();
    let bleu = if defined_weight <= 0.0 || precisions.iter().flatten().any(|&p| p == 0.0) {
        0.0
    } else {
        let log_sum: f64 = precisions
            .iter()
            .zip(&weights)
            .filter_map(|(p, &w)| p.map(|p| w / defined_weight * p.ln()))
            .sum();
        bp * log_sum.exp()
    };

    Ok(BleuReport {
        bleu,
        precisions,
        matched,
        total,
        brevity_penalty: bp,
        candidate_len,
        reference_len,
        weights,
    })
}
