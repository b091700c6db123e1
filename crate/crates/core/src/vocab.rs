//! Word-level vocabularies with fixed special tokens.
//!
//! Ids 0-3 are reserved: `<pad>`, `<bos>`, `<eos>`, `<unk>`. Pad at id 0
//! doubles as the cross-entropy ignore id. Corpus tokens are ordered by
//! descending frequency with a lexicographic tie-break, so builds are
//! reproducible across platforms.

use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

const SPECIALS: [&str; 4] = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

/// Token ↔ id codec. Immutable after build; ids are dense in `[0, size)`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    /// Corpus tokens only (ids ≥ 4); special strings are never keys, so a
    /// literal "<pad>" in text encodes to unk rather than to pad.
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    /// Build-time frequency per id; 0 for specials.
    freqs: Vec<u64>,
    pub min_freq: u64,
}

impl Vocabulary {
    /// Count token frequencies across `sequences` and keep those occurring
    /// at least `min_freq` times. Tokens spelled like a special are skipped
    /// so the reserved ids never collide.
    pub fn build<'a, I>(sequences: I, min_freq: u64) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        let mut total = 0u64;
        for seq in sequences {
            for token in seq {
                total += 1;
                if SPECIALS.contains(&token.as_str()) {
                    continue;
                }
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        if total == 0 {
            return Err(Error::invalid_input("cannot build a vocabulary from an empty corpus"));
        }

        let mut entries: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, freq)| freq >= min_freq)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut vocab = Vocabulary::specials_only(min_freq);
        for (token, freq) in entries {
            vocab.push(token.to_string(), freq);
        }
        Ok(vocab)
    }

    fn specials_only(min_freq: u64) -> Vocabulary {
        Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: SPECIALS.iter().map(|s| s.to_string()).collect(),
            freqs: vec![0; SPECIALS.len()],
            min_freq,
        }
    }

    fn push(&mut self, token: String, freq: u64) {
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
        self.freqs.push(freq);
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    /// Id of a token, unk for anything unseen (including special spellings).
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.id_to_token
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(Error::IdOutOfRange { id, size: self.size() })
    }

    /// Map tokens to ids, optionally wrapping in bos/eos.
    pub fn encode(&self, tokens: &[String], add_bos_eos: bool) -> Vec<u32> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        if add_bos_eos {
            ids.push(BOS_ID);
        }
        ids.extend(tokens.iter().map(|t| self.id(t)));
        if add_bos_eos {
            ids.push(EOS_ID);
        }
        ids
    }

    /// Map ids back to tokens. With `strip_specials`, pad/bos/eos vanish
    /// while unk decodes to its literal token string.
    pub fn decode(&self, ids: &[u32], strip_specials: bool) -> Result<Vec<String>> {
        let mut tokens = Vec::with_capacity(ids.len());
        for &id in ids {
            let token = self.token(id)?;
            if strip_specials && (id == PAD_ID || id == BOS_ID || id == EOS_ID) {
                continue;
            }
            tokens.push(token.to_string());
        }
        Ok(tokens)
    }

    /// Write `token<TAB>frequency` lines ordered by id, specials first.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(self.to_tsv().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (token, freq) in self.id_to_token.iter().zip(&self.freqs) {
            out.push_str(token);
            out.push('\t');
            out.push_str(&freq.to_string());
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tsv(&text).map_err(|detail| Error::MalformedFile {
            kind: "vocabulary",
            detail: format!("{}: {detail}", path.display()),
        })
    }

    /// Parse the `token<TAB>frequency` format; ids come from line order.
    /// The stored min_freq is not part of the format and resets to 1.
    pub fn from_tsv(text: &str) -> std::result::Result<Vocabulary, String> {
        let mut vocab = Vocabulary::specials_only(1);
        vocab.id_to_token.clear();
        vocab.freqs.clear();
        for (i, line) in text.lines().enumerate() {
            let (token, freq) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: missing tab separator", i + 1))?;
            let freq: u64 = freq
                .parse()
                .map_err(|_| format!("line {}: bad frequency {freq:?}", i + 1))?;
            if i < SPECIALS.len() {
                if token != SPECIALS[i] {
                    return Err(format!(
                        "line {}: expected special token {:?}, found {token:?}",
                        i + 1,
                        SPECIALS[i]
                    ));
                }
                vocab.id_to_token.push(token.to_string());
                vocab.freqs.push(freq);
            } else {
                if vocab.token_to_id.contains_key(token) || SPECIALS.contains(&token) {
                    return Err(format!("line {}: duplicate token {token:?}", i + 1));
                }
                vocab.push(token.to_string(), freq);
            }
        }
        if vocab.id_to_token.len() < SPECIALS.len() {
            return Err(format!(
                "expected at least the {} special tokens, found {} lines",
                SPECIALS.len(),
                vocab.id_to_token.len()
            ));
        }
        Ok(vocab)
    }
}
