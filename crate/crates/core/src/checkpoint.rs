//! Versioned binary checkpoint container.
//!
//! Layout: magic `MTRX`, format version, model and training configs as
//! fixed-width little-endian fields, epoch, both vocabularies embedded as
//! TSV blobs, named parameter blobs (name, shape, raw f32 data), and an
//! optional optimizer-state section. Everything needed to resume training
//! or translate lives in the one file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TransformerModel};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::training::{Adam, TrainConfig};
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 4] = b"MTRX";
pub const FORMAT_VERSION: u32 = 1;

/// Adam moments and step count, keyed the same way as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step_count: u64,
    pub m: Vec<(String, Vec<f32>)>,
    pub v: Vec<(String, Vec<f32>)>,
}

/// A complete training artifact. Parameters are stored as f32, so the
/// round-trip guarantee (load(save(x)) gives bitwise-identical forward
/// passes) holds for f32 models.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub epoch: u32,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub params: Vec<(String, Vec<usize>, Vec<f32>)>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    /// Snapshot a model (and optionally its optimizer) into a checkpoint.
    pub fn capture(
        model: &TransformerModel<f32>,
        train_config: &TrainConfig,
        epoch: u32,
        src_vocab: &Vocabulary,
        tgt_vocab: &Vocabulary,
        optimizer: Option<&Adam<f32>>,
    ) -> Checkpoint {
        let params = model
            .parameters()
            .into_iter()
            .map(|(name, t)| (name, t.shape().to_vec(), t.data().to_vec()))
            .collect();
        let optimizer = optimizer.map(|adam| {
            let mut m: Vec<(String, Vec<f32>)> =
                adam.m.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            let mut v: Vec<(String, Vec<f32>)> =
                adam.v.iter().map(|(k, val)| (k.clone(), val.clone())).collect();
            m.sort_by(|a, b| a.0.cmp(&b.0));
            v.sort_by(|a, b| a.0.cmp(&b.0));
            OptimizerState { step_count: adam.step_count, m, v }
        });
        Checkpoint {
            version: FORMAT_VERSION,
            model_config: model.config.clone(),
            train_config: train_config.clone(),
            epoch,
            src_vocab: src_vocab.clone(),
            tgt_vocab: tgt_vocab.clone(),
            params,
            optimizer,
        }
    }

    /// Rebuild the model with the stored parameters. Names, shapes, and
    /// counts must match what the stored config produces.
    pub fn restore_model(&self) -> Result<TransformerModel<f32>> {
        let mut model =
            TransformerModel::<f32>::new(self.model_config.clone(), &mut Rng::seed_from(0))?;
        let slots = model.parameters_mut();
        if slots.len() != self.params.len() {
            return Err(malformed(format!(
                "parameter count {} does not match the config's {}",
                self.params.len(),
                slots.len()
            )));
        }
        for ((name, slot), (stored_name, shape, data)) in slots.into_iter().zip(&self.params) {
            if &name != stored_name {
                return Err(malformed(format!(
                    "parameter order mismatch: expected {name}, found {stored_name}"
                )));
            }
            if slot.shape() != shape.as_slice() {
                return Err(malformed(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    shape,
                    slot.shape()
                )));
            }
            *slot = Tensor::param(shape, data.clone());
        }
        Ok(model)
    }

    /// Rebuild the optimizer where state was saved.
    pub fn restore_optimizer(&self) -> Option<Adam<f32>> {
        self.optimizer.as_ref().map(|state| {
            let mut adam = Adam::<f32>::from_config(&self.train_config);
            adam.step_count = state.step_count;
            adam.m = state.m.iter().cloned().collect();
            adam.v = state.v.iter().cloned().collect();
            adam
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.version);

        let mc = &self.model_config;
        for field in [
            mc.d_model,
            mc.n_heads,
            mc.n_encoder_layers,
            mc.n_decoder_layers,
            mc.max_seq_len,
            mc.expansion,
            mc.src_vocab_size,
            mc.tgt_vocab_size,
        ] {
            put_u64(&mut out, field as u64);
        }
        put_f64(&mut out, mc.dropout_p);

        let tc = &self.train_config;
        put_u64(&mut out, tc.epochs as u64);
        put_f64(&mut out, tc.learning_rate);
        put_u64(&mut out, tc.batch_size as u64);
        put_f64(&mut out, tc.dropout);
        out.push(tc.early_stopping as u8);
        put_u64(&mut out, tc.patience as u64);
        put_u64(&mut out, tc.seed);
        put_f64(&mut out, tc.beta1);
        put_f64(&mut out, tc.beta2);
        put_f64(&mut out, tc.eps);
        out.push(tc.grad_clip.is_some() as u8);
        put_f64(&mut out, tc.grad_clip.unwrap_or(0.0));

        put_u32(&mut out, self.epoch);
        put_blob(&mut out, self.src_vocab.to_tsv().as_bytes());
        put_blob(&mut out, self.tgt_vocab.to_tsv().as_bytes());

        put_u32(&mut out, self.params.len() as u32);
        for (name, shape, data) in &self.params {
            put_blob(&mut out, name.as_bytes());
            put_u32(&mut out, shape.len() as u32);
            for &dim in shape {
                put_u64(&mut out, dim as u64);
            }
            for &x in data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }

        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                put_u64(&mut out, state.step_count);
                for moments in [&state.m, &state.v] {
                    put_u32(&mut out, moments.len() as u32);
                    for (name, values) in moments {
                        put_blob(&mut out, name.as_bytes());
                        put_u64(&mut out, values.len() as u64);
                        for &x in values {
                            out.extend_from_slice(&x.to_le_bytes());
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(malformed("bad magic bytes, not a checkpoint"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(malformed(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }

        let d_model = r.u64()? as usize;
        let n_heads = r.u64()? as usize;
        let n_encoder_layers = r.u64()? as usize;
        let n_decoder_layers = r.u64()? as usize;
        let max_seq_len = r.u64()? as usize;
        let expansion = r.u64()? as usize;
        let src_vocab_size = r.u64()? as usize;
        let tgt_vocab_size = r.u64()? as usize;
        let dropout_p = r.f64()?;
        let model_config = ModelConfig {
            d_model,
            n_heads,
            n_encoder_layers,
            n_decoder_layers,
            max_seq_len,
            expansion,
            dropout_p,
            src_vocab_size,
            tgt_vocab_size,
        };

        let epochs = r.u64()? as usize;
        let learning_rate = r.f64()?;
        let batch_size = r.u64()? as usize;
        let dropout = r.f64()?;
        let early_stopping = r.u8()? != 0;
        let patience = r.u64()? as usize;
        let seed = r.u64()?;
        let beta1 = r.f64()?;
        let beta2 = r.f64()?;
        let eps = r.f64()?;
        let has_clip = r.u8()? != 0;
        let clip_value = r.f64()?;
        let train_config = TrainConfig {
            epochs,
            learning_rate,
            batch_size,
            dropout,
            early_stopping,
            patience,
            seed,
            beta1,
            beta2,
            eps,
            grad_clip: has_clip.then_some(clip_value),
        };

        let epoch = r.u32()?;
        let src_vocab = read_vocab(&mut r)?;
        let tgt_vocab = read_vocab(&mut r)?;

        let param_count = r.u32()? as usize;
        let mut params = Vec::with_capacity(param_count);
        for _ in 0..param_count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| malformed(format!("implausible shape {shape:?} for {name}")))?;
            let data = r.f32_vec(numel)?;
            params.push((name, shape, data));
        }

        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step_count = r.u64()?;
                let mut sections = Vec::new();
                for _ in 0..2 {
                    let count = r.u32()? as usize;
                    let mut entries = Vec::with_capacity(count);
                    for _ in 0..count {
                        let name = r.string()?;
                        let len = r.u64()? as usize;
                        entries.push((name, r.f32_vec(len)?));
                    }
                    sections.push(entries);
                }
                let v = sections.pop().expect("two sections were pushed");
                let m = sections.pop().expect("two sections were pushed");
                Some(OptimizerState { step_count, m, v })
            }
            flag => return Err(malformed(format!("unknown optimizer flag {flag}"))),
        };

        if r.pos != buf.len() {
            return Err(malformed(format!(
                "{} trailing bytes after the optimizer section",
                buf.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            version,
            model_config,
            train_config,
            epoch,
            src_vocab,
            tgt_vocab,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

fn malformed(detail: impl Into<String>) -> Error {
    Error::MalformedFile { kind: "checkpoint", detail: detail.into() }
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_blob(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u64(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

fn read_vocab(r: &mut Reader<'_>) -> Result<Vocabulary> {
    let blob = r.blob()?;
    let text = std::str::from_utf8(blob)
        .map_err(|_| malformed("vocabulary blob is not valid UTF-8"))?;
    Vocabulary::from_tsv(text).map_err(|detail| malformed(format!("embedded vocabulary: {detail}")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() - self.pos {
            return Err(malformed(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let len = self.u64()? as usize;
        self.take(len)
    }

    fn string(&mut self) -> Result<String> {
        let blob = self.blob()?;
        String::from_utf8(blob.to_vec()).map_err(|_| malformed("name is not valid UTF-8"))
    }

    fn f32_vec(&mut self, count: usize) -> Result<Vec<f32>> {
        let byte_count = count
            .checked_mul(4)
            .ok_or_else(|| malformed(format!("implausible element count {count}")))?;
        let bytes = self.take(byte_count)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
