//! Transformer encoder-decoder for sequence-to-sequence translation.
//!
//! Post-norm layers throughout: sublayer output → dropout → residual add →
//! layer norm. Positional encodings are learned tables added to the token
//! embeddings (no sqrt(d_model) scaling of the embeddings), with dropout
//! applied to the sum. Source and target sides keep separate embedding and
//! positional tables, and the output projection is untied.
//!
//! Initialization: every linear layer draws weights and biases from
//! uniform(-sqrt(1/d_in), +sqrt(1/d_in)); embedding and positional tables
//! draw from normal(0, 1/sqrt(d_model)); layer-norm gains start at 1 and
//! biases at 0. Construction consumes the RNG in a fixed parameter order,
//! so one seed reproduces one model bitwise.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};
use crate::vocab::PAD_ID;

const LN_EPS: f64 = 1e-5;

/// Hyperparameters. Vocabulary sizes come from the data; everything else
/// has the stock defaults used by the full-size model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub max_seq_len: usize,
    /// FFN inner width multiplier.
    pub expansion: usize,
    pub dropout_p: f64,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
}

impl ModelConfig {
    /// Stock hyperparameters: d_model 512, 8 heads, 3+3 layers, max length
    /// 100, expansion 4, dropout 0.1.
    pub fn with_vocab(src_vocab_size: usize, tgt_vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: 512,
            n_heads: 8,
            n_encoder_layers: 3,
            n_decoder_layers: 3,
            max_seq_len: 100,
            expansion: 4,
            dropout_p: 0.1,
            src_vocab_size,
            tgt_vocab_size,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 {
            return Err(Error::invalid_config("d_model and n_heads must be positive"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::invalid_config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_encoder_layers == 0 || self.n_decoder_layers == 0 {
            return Err(Error::invalid_config("layer counts must be positive"));
        }
        if self.max_seq_len == 0 {
            return Err(Error::invalid_config("max_seq_len must be positive"));
        }
        if self.expansion < 1 {
            return Err(Error::invalid_config("expansion must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::invalid_config(format!(
                "dropout must satisfy 0 <= p < 1, got {}",
                self.dropout_p
            )));
        }
        if self.src_vocab_size < 4 || self.tgt_vocab_size < 4 {
            return Err(Error::invalid_config(
                "vocabulary sizes must cover the four special tokens",
            ));
        }
        Ok(())
    }
}

/// Dropout source for a forward pass: training draws from the run's RNG,
/// evaluation is the exact identity.
pub enum ForwardMode<'a> {
    Train(&'a mut Rng),
    Eval,
}

impl ForwardMode<'_> {
    fn dropout<E: Scalar>(&mut self, x: &Tensor<E>, p: f64) -> Tensor<E> {
        match self {
            ForwardMode::Train(rng) => x.dropout(p, true, rng),
            ForwardMode::Eval => x.clone(),
        }
    }
}

/// A rectangular batch of token ids, row-major `[rows, cols]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdBatch {
    pub ids: Vec<u32>,
    pub rows: usize,
    pub cols: usize,
}

impl IdBatch {
    pub fn new(ids: Vec<u32>, rows: usize, cols: usize) -> IdBatch {
        assert_eq!(
            ids.len(),
            rows * cols,
            "id batch of {rows}x{cols} requires {} ids, got {}",
            rows * cols,
            ids.len()
        );
        IdBatch { ids, rows, cols }
    }

    /// Right-pad variable-length rows with `pad_id` to the longest row.
    pub fn pad_rows(rows: &[Vec<u32>], pad_id: u32) -> IdBatch {
        let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            ids.extend_from_slice(row);
            ids.extend(std::iter::repeat_n(pad_id, cols - row.len()));
        }
        IdBatch::new(ids, rows.len(), cols)
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r * self.cols..(r + 1) * self.cols]
    }
}

/// Boolean attention mask; `true` marks an attendable key position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    pub values: Vec<bool>,
    /// Always rank 4, broadcastable over `[batch, heads, q_len, k_len]`.
    pub shape: Vec<usize>,
}

impl AttentionMask {
    /// `[batch, 1, 1, len]`, false exactly at pad positions.
    pub fn pad_mask(batch: &IdBatch, pad_id: u32) -> AttentionMask {
        AttentionMask {
            values: batch.ids.iter().map(|&id| id != pad_id).collect(),
            shape: vec![batch.rows, 1, 1, batch.cols],
        }
    }

    /// `[1, 1, len, len]` lower-triangular: position i attends to j <= i.
    pub fn lookahead(len: usize) -> AttentionMask {
        assert!(len >= 1, "look-ahead mask needs a positive length");
        let mut values = vec![false; len * len];
        for i in 0..len {
            for j in 0..=i {
                values[i * len + j] = true;
            }
        }
        AttentionMask { values, shape: vec![1, 1, len, len] }
    }

    /// Elementwise conjunction with size-1 broadcasting, e.g. look-ahead
    /// `[1,1,T,T]` AND target pad `[B,1,1,T]` gives `[B,1,T,T]`.
    pub fn and(&self, other: &AttentionMask) -> AttentionMask {
        let rank = self.shape.len().max(other.shape.len());
        let pa = crate::tensor::pad_shape(&self.shape, rank);
        let pb = crate::tensor::pad_shape(&other.shape, rank);
        let out_shape: Vec<usize> = pa
            .iter()
            .zip(&pb)
            .map(|(&a, &b)| {
                assert!(
                    a == b || a == 1 || b == 1,
                    "mask shapes {:?} and {:?} do not broadcast",
                    self.shape,
                    other.shape
                );
                a.max(b)
            })
            .collect();
        let sa = crate::tensor::broadcast_strides(&pa);
        let sb = crate::tensor::broadcast_strides(&pb);
        let mut values = vec![false; out_shape.iter().product()];
        crate::tensor::for_each_broadcast2(&out_shape, &sa, &sb, |o, ia, ib| {
            values[o] = self.values[ia] && other.values[ib];
        });
        AttentionMask { values, shape: out_shape }
    }
}

/// Fully connected layer, `weight` of shape `[d_in, d_out]`.
#[derive(Debug)]
pub struct Linear<E: Scalar> {
    pub weight: Tensor<E>,
    pub bias: Option<Tensor<E>>,
}

impl<E: Scalar> Linear<E> {
    fn new(d_in: usize, d_out: usize, with_bias: bool, rng: &mut Rng) -> Linear<E> {
        let bound = (1.0 / d_in as f64).sqrt();
        let weight_data: Vec<E> = (0..d_in * d_out)
            .map(|_| E::from_f64(rng.uniform(-bound, bound)))
            .collect();
        let weight = Tensor::param(&[d_in, d_out], weight_data);
        let bias = with_bias.then(|| {
            let data: Vec<E> = (0..d_out)
                .map(|_| E::from_f64(rng.uniform(-bound, bound)))
                .collect();
            Tensor::param(&[d_out], data)
        });
        Linear { weight, bias }
    }

    pub fn apply(&self, x: &Tensor<E>) -> Tensor<E> {
        let projected = x.matmul(&self.weight);
        match &self.bias {
            Some(b) => projected.add(b),
            None => projected,
        }
    }
}

/// Learnable layer-norm affine, applied over the last dimension.
#[derive(Debug)]
pub struct LayerNorm<E: Scalar> {
    pub gain: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Scalar> LayerNorm<E> {
    fn new(d: usize) -> LayerNorm<E> {
        LayerNorm {
            gain: Tensor::param(&[d], vec![E::one(); d]),
            bias: Tensor::param(&[d], vec![E::zero(); d]),
        }
    }

    pub fn apply(&self, x: &Tensor<E>) -> Tensor<E> {
        x.layer_norm(&self.gain, &self.bias, E::from_f64(LN_EPS))
    }
}

/// Attention(Q, K, V) = softmax(QK^T / sqrt(d_k)) V, with masked positions
/// forced to -inf before the softmax so they get exactly zero weight.
pub fn scaled_dot_attention<E: Scalar>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    v: &Tensor<E>,
    mask: Option<&AttentionMask>,
) -> Tensor<E> {
    let rank = k.shape().len();
    let d_k = *q.shape().last().expect("attention inputs have a head dimension");
    let scores = q
        .matmul(&k.swap_axes(rank - 2, rank - 1))
        .scale(E::from_f64(1.0 / (d_k as f64).sqrt()));
    let scores = match mask {
        Some(m) => scores.masked_fill(&m.values, &m.shape, E::neg_infinity()),
        None => scores,
    };
    scores.softmax_lastdim().matmul(v)
}

/// Multi-head attention: fused Q/K/V projections, per-head scaled dot
/// attention, concatenation, and the output projection. No biases on any
/// of the four projections.
#[derive(Debug)]
pub struct MultiHeadAttention<E: Scalar> {
    pub wq: Linear<E>,
    pub wk: Linear<E>,
    pub wv: Linear<E>,
    pub wo: Linear<E>,
    pub n_heads: usize,
}

impl<E: Scalar> MultiHeadAttention<E> {
    fn new(d_model: usize, n_heads: usize, rng: &mut Rng) -> MultiHeadAttention<E> {
        MultiHeadAttention {
            wq: Linear::new(d_model, d_model, false, rng),
            wk: Linear::new(d_model, d_model, false, rng),
            wv: Linear::new(d_model, d_model, false, rng),
            wo: Linear::new(d_model, d_model, false, rng),
            n_heads,
        }
    }

    /// Queries come from `x_q`, keys and values from `x_kv` (self-attention
    /// passes the same tensor twice).
    pub fn apply(
        &self,
        x_q: &Tensor<E>,
        x_kv: &Tensor<E>,
        mask: Option<&AttentionMask>,
    ) -> Tensor<E> {
        let (batch, q_len, d_model) = (x_q.shape()[0], x_q.shape()[1], x_q.shape()[2]);
        let kv_len = x_kv.shape()[1];
        let d_k = d_model / self.n_heads;
        let split = |t: &Tensor<E>, len: usize| {
            t.reshape(&[batch, len, self.n_heads, d_k]).swap_axes(1, 2)
        };
        let q = split(&self.wq.apply(x_q), q_len);
        let k = split(&self.wk.apply(x_kv), kv_len);
        let v = split(&self.wv.apply(x_kv), kv_len);
        let attended = scaled_dot_attention(&q, &k, &v, mask);
        let merged = attended.swap_axes(1, 2).reshape(&[batch, q_len, d_model]);
        self.wo.apply(&merged)
    }
}

/// Position-wise feed-forward: W2 relu(W1 x + b1) + b2.
#[derive(Debug)]
pub struct FeedForward<E: Scalar> {
    pub w1: Linear<E>,
    pub w2: Linear<E>,
}

impl<E: Scalar> FeedForward<E> {
    fn new(d_model: usize, expansion: usize, rng: &mut Rng) -> FeedForward<E> {
        FeedForward {
            w1: Linear::new(d_model, expansion * d_model, true, rng),
            w2: Linear::new(expansion * d_model, d_model, true, rng),
        }
    }

    pub fn apply(&self, x: &Tensor<E>) -> Tensor<E> {
        self.w2.apply(&self.w1.apply(x).relu())
    }
}

#[derive(Debug)]
pub struct EncoderLayer<E: Scalar> {
    pub self_attn: MultiHeadAttention<E>,
    pub norm1: LayerNorm<E>,
    pub ffn: FeedForward<E>,
    pub norm2: LayerNorm<E>,
}

impl<E: Scalar> EncoderLayer<E> {
    fn new(cfg: &ModelConfig, rng: &mut Rng) -> EncoderLayer<E> {
        EncoderLayer {
            self_attn: MultiHeadAttention::new(cfg.d_model, cfg.n_heads, rng),
            norm1: LayerNorm::new(cfg.d_model),
            ffn: FeedForward::new(cfg.d_model, cfg.expansion, rng),
            norm2: LayerNorm::new(cfg.d_model),
        }
    }

    pub fn apply(
        &self,
        x: &Tensor<E>,
        pad_mask: &AttentionMask,
        dropout_p: f64,
        mode: &mut ForwardMode<'_>,
    ) -> Tensor<E> {
        let attended = self.self_attn.apply(x, x, Some(pad_mask));
        let x = self.norm1.apply(&x.add(&mode.dropout(&attended, dropout_p)));
        let fed = self.ffn.apply(&x);
        self.norm2.apply(&x.add(&mode.dropout(&fed, dropout_p)))
    }
}

#[derive(Debug)]
pub struct DecoderLayer<E: Scalar> {
    pub self_attn: MultiHeadAttention<E>,
    pub norm1: LayerNorm<E>,
    pub cross_attn: MultiHeadAttention<E>,
    pub norm2: LayerNorm<E>,
    pub ffn: FeedForward<E>,
    pub norm3: LayerNorm<E>,
}

impl<E: Scalar> DecoderLayer<E> {
    fn new(cfg: &ModelConfig, rng: &mut Rng) -> DecoderLayer<E> {
        DecoderLayer {
            self_attn: MultiHeadAttention::new(cfg.d_model, cfg.n_heads, rng),
            norm1: LayerNorm::new(cfg.d_model),
            cross_attn: MultiHeadAttention::new(cfg.d_model, cfg.n_heads, rng),
            norm2: LayerNorm::new(cfg.d_model),
            ffn: FeedForward::new(cfg.d_model, cfg.expansion, rng),
            norm3: LayerNorm::new(cfg.d_model),
        }
    }

    pub fn apply(
        &self,
        y: &Tensor<E>,
        enc_out: &Tensor<E>,
        self_mask: &AttentionMask,
        cross_pad_mask: &AttentionMask,
        dropout_p: f64,
        mode: &mut ForwardMode<'_>,
    ) -> Tensor<E> {
        let attended = self.self_attn.apply(y, y, Some(self_mask));
        let y = self.norm1.apply(&y.add(&mode.dropout(&attended, dropout_p)));
        let crossed = self.cross_attn.apply(&y, enc_out, Some(cross_pad_mask));
        let y = self.norm2.apply(&y.add(&mode.dropout(&crossed, dropout_p)));
        let fed = self.ffn.apply(&y);
        self.norm3.apply(&y.add(&mode.dropout(&fed, dropout_p)))
    }
}

/// The full encoder-decoder with all learnable parameters.
#[derive(Debug)]
pub struct TransformerModel<E: Scalar = f32> {
    pub config: ModelConfig,
    pub src_embed: Tensor<E>,
    pub tgt_embed: Tensor<E>,
    pub src_pos: Tensor<E>,
    pub tgt_pos: Tensor<E>,
    pub encoder: Vec<EncoderLayer<E>>,
    pub decoder: Vec<DecoderLayer<E>>,
    pub out_proj: Linear<E>,
}

impl<E: Scalar> TransformerModel<E> {
    /// Validates the config and draws all parameters from `rng` in a fixed
    /// order: embeddings, positional tables, encoder layers, decoder
    /// layers, output projection.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<TransformerModel<E>> {
        config.validate()?;
        let d = config.d_model;
        let emb_std = 1.0 / (d as f64).sqrt();
        let mut table = |rows: usize| {
            let data: Vec<E> = (0..rows * d)
                .map(|_| E::from_f64(rng.normal(0.0, emb_std)))
                .collect();
            Tensor::param(&[rows, d], data)
        };
        let src_embed = table(config.src_vocab_size);
        let tgt_embed = table(config.tgt_vocab_size);
        let src_pos = table(config.max_seq_len);
        let tgt_pos = table(config.max_seq_len);
        let encoder = (0..config.n_encoder_layers)
            .map(|_| EncoderLayer::new(&config, rng))
            .collect();
        let decoder = (0..config.n_decoder_layers)
            .map(|_| DecoderLayer::new(&config, rng))
            .collect();
        let out_proj = Linear::new(d, config.tgt_vocab_size, false, rng);
        Ok(TransformerModel {
            config,
            src_embed,
            tgt_embed,
            src_pos,
            tgt_pos,
            encoder,
            decoder,
            out_proj,
        })
    }

    fn check_len(&self, len: usize, side: &str) -> Result<()> {
        if len > self.config.max_seq_len {
            return Err(Error::invalid_input(format!(
                "{side} sequence length {len} exceeds max_seq_len {}",
                self.config.max_seq_len
            )));
        }
        Ok(())
    }

    /// Token embeddings plus positional rows 0..len, then dropout.
    fn embed(
        &self,
        batch: &IdBatch,
        table: &Tensor<E>,
        pos: &Tensor<E>,
        mode: &mut ForwardMode<'_>,
    ) -> Tensor<E> {
        let d = self.config.d_model;
        let tokens = table
            .embedding_gather(&batch.ids)
            .reshape(&[batch.rows, batch.cols, d]);
        let positions: Vec<u32> = (0..batch.cols as u32).collect();
        let pos_rows = pos.embedding_gather(&positions).reshape(&[1, batch.cols, d]);
        mode.dropout(&tokens.add(&pos_rows), self.config.dropout_p)
    }

    /// Run the encoder stack; the result can be reused across decode steps.
    pub fn encode(&self, src: &IdBatch, mode: &mut ForwardMode<'_>) -> Result<Tensor<E>> {
        self.check_len(src.cols, "source")?;
        let pad_mask = AttentionMask::pad_mask(src, PAD_ID);
        let mut x = self.embed(src, &self.src_embed, &self.src_pos, mode);
        for layer in &self.encoder {
            x = layer.apply(&x, &pad_mask, self.config.dropout_p, mode);
        }
        Ok(x)
    }

    /// Run the decoder stack over `tgt` given encoder output, returning
    /// pre-softmax logits `[batch, tgt_len, tgt_vocab]`.
    pub fn decode(
        &self,
        tgt: &IdBatch,
        enc_out: &Tensor<E>,
        src: &IdBatch,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Tensor<E>> {
        self.check_len(tgt.cols, "target")?;
        let self_mask = AttentionMask::lookahead(tgt.cols).and(&AttentionMask::pad_mask(tgt, PAD_ID));
        let cross_mask = AttentionMask::pad_mask(src, PAD_ID);
        let mut y = self.embed(tgt, &self.tgt_embed, &self.tgt_pos, mode);
        for layer in &self.decoder {
            y = layer.apply(&y, enc_out, &self_mask, &cross_mask, self.config.dropout_p, mode);
        }
        Ok(self.out_proj.apply(&y))
    }

    /// Full forward pass. `tgt` is the shifted (bos-prefixed) decoder
    /// input; the unshifted target serves as labels outside this call.
    pub fn forward(
        &self,
        src: &IdBatch,
        tgt: &IdBatch,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Tensor<E>> {
        let enc_out = self.encode(src, mode)?;
        self.decode(tgt, &enc_out, src, mode)
    }

    /// All learnable tensors with stable, checkpoint-friendly names.
    pub fn parameters(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        let mut push = |name: String, t: &Tensor<E>| out.push((name, t.clone()));
        push("src_embed".into(), &self.src_embed);
        push("tgt_embed".into(), &self.tgt_embed);
        push("src_pos".into(), &self.src_pos);
        push("tgt_pos".into(), &self.tgt_pos);
        for (i, layer) in self.encoder.iter().enumerate() {
            let p = format!("enc{i}");
            push(format!("{p}.self_attn.wq"), &layer.self_attn.wq.weight);
            push(format!("{p}.self_attn.wk"), &layer.self_attn.wk.weight);
            push(format!("{p}.self_attn.wv"), &layer.self_attn.wv.weight);
            push(format!("{p}.self_attn.wo"), &layer.self_attn.wo.weight);
            push(format!("{p}.norm1.gain"), &layer.norm1.gain);
            push(format!("{p}.norm1.bias"), &layer.norm1.bias);
            push(format!("{p}.ffn.w1"), &layer.ffn.w1.weight);
            push(format!("{p}.ffn.b1"), layer.ffn.w1.bias.as_ref().expect("ffn has biases"));
            push(format!("{p}.ffn.w2"), &layer.ffn.w2.weight);
            push(format!("{p}.ffn.b2"), layer.ffn.w2.bias.as_ref().expect("ffn has biases"));
            push(format!("{p}.norm2.gain"), &layer.norm2.gain);
            push(format!("{p}.norm2.bias"), &layer.norm2.bias);
        }
        for (i, layer) in self.decoder.iter().enumerate() {
            let p = format!("dec{i}");
            push(format!("{p}.self_attn.wq"), &layer.self_attn.wq.weight);
            push(format!("{p}.self_attn.wk"), &layer.self_attn.wk.weight);
            push(format!("{p}.self_attn.wv"), &layer.self_attn.wv.weight);
            push(format!("{p}.self_attn.wo"), &layer.self_attn.wo.weight);
            push(format!("{p}.norm1.gain"), &layer.norm1.gain);
            push(format!("{p}.norm1.bias"), &layer.norm1.bias);
            push(format!("{p}.cross_attn.wq"), &layer.cross_attn.wq.weight);
            push(format!("{p}.cross_attn.wk"), &layer.cross_attn.wk.weight);
            push(format!("{p}.cross_attn.wv"), &layer.cross_attn.wv.weight);
            push(format!("{p}.cross_attn.wo"), &layer.cross_attn.wo.weight);
            push(format!("{p}.norm2.gain"), &layer.norm2.gain);
            push(format!("{p}.norm2.bias"), &layer.norm2.bias);
            push(format!("{p}.ffn.w1"), &layer.ffn.w1.weight);
            push(format!("{p}.ffn.b1"), layer.ffn.w1.bias.as_ref().expect("ffn has biases"));
            push(format!("{p}.ffn.w2"), &layer.ffn.w2.weight);
            push(format!("{p}.ffn.b2"), layer.ffn.w2.bias.as_ref().expect("ffn has biases"));
            push(format!("{p}.norm3.gain"), &layer.norm3.gain);
            push(format!("{p}.norm3.bias"), &layer.norm3.bias);
        }
        push("out_proj".into(), &self.out_proj.weight);
        out
    }

    /// Mutable slots in the same order as [`TransformerModel::parameters`];
    /// the optimizer swaps whole tensors in through these.
    pub fn parameters_mut(&mut self) -> Vec<(String, &mut Tensor<E>)> {
        let mut out: Vec<(String, &mut Tensor<E>)> = vec![
            ("src_embed".into(), &mut self.src_embed),
            ("tgt_embed".into(), &mut self.tgt_embed),
            ("src_pos".into(), &mut self.src_pos),
            ("tgt_pos".into(), &mut self.tgt_pos),
        ];
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            let p = format!("enc{i}");
            out.push((format!("{p}.self_attn.wq"), &mut layer.self_attn.wq.weight));
            out.push((format!("{p}.self_attn.wk"), &mut layer.self_attn.wk.weight));
            out.push((format!("{p}.self_attn.wv"), &mut layer.self_attn.wv.weight));
            out.push((format!("{p}.self_attn.wo"), &mut layer.self_attn.wo.weight));
            out.push((format!("{p}.norm1.gain"), &mut layer.norm1.gain));
            out.push((format!("{p}.norm1.bias"), &mut layer.norm1.bias));
            out.push((format!("{p}.ffn.w1"), &mut layer.ffn.w1.weight));
            out.push((format!("{p}.ffn.b1"), layer.ffn.w1.bias.as_mut().expect("ffn has biases")));
            out.push((format!("{p}.ffn.w2"), &mut layer.ffn.w2.weight));
            out.push((format!("{p}.ffn.b2"), layer.ffn.w2.bias.as_mut().expect("ffn has biases")));
            out.push((format!("{p}.norm2.gain"), &mut layer.norm2.gain));
            out.push((format!("{p}.norm2.bias"), &mut layer.norm2.bias));
        }
        for (i, layer) in self.decoder.iter_mut().enumerate() {
            let p = format!("dec{i}");
            out.push((format!("{p}.self_attn.wq"), &mut layer.self_attn.wq.weight));
            out.push((format!("{p}.self_attn.wk"), &mut layer.self_attn.wk.weight));
            out.push((format!("{p}.self_attn.wv"), &mut layer.self_attn.wv.weight));
            out.push((format!("{p}.self_attn.wo"), &mut layer.self_attn.wo.weight));
            out.push((format!("{p}.norm1.gain"), &mut layer.norm1.gain));
            out.push((format!("{p}.norm1.bias"), &mut layer.norm1.bias));
            out.push((format!("{p}.cross_attn.wq"), &mut layer.cross_attn.wq.weight));
            out.push((format!("{p}.cross_attn.wk"), &mut layer.cross_attn.wk.weight));
            out.push((format!("{p}.cross_attn.wv"), &mut layer.cross_attn.wv.weight));
            out.push((format!("{p}.cross_attn.wo"), &mut layer.cross_attn.wo.weight));
            out.push((format!("{p}.norm2.gain"), &mut layer.norm2.gain));
            out.push((format!("{p}.norm2.bias"), &mut layer.norm2.bias));
            out.push((format!("{p}.ffn.w1"), &mut layer.ffn.w1.weight));
            out.push((format!("{p}.ffn.b1"), layer.ffn.w1.bias.as_mut().expect("ffn has biases")));
            out.push((format!("{p}.ffn.w2"), &mut layer.ffn.w2.weight));
            out.push((format!("{p}.ffn.b2"), layer.ffn.w2.bias.as_mut().expect("ffn has biases")));
            out.push((format!("{p}.norm3.gain"), &mut layer.norm3.gain));
            out.push((format!("{p}.norm3.bias"), &mut layer.norm3.bias));
        }
        out.push(("out_proj".into(), &mut self.out_proj.weight));
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Reset all accumulated gradients.
    pub fn clear_grads(&self) {
        for (_, p) in self.parameters() {
            p.clear_grad();
        }
    }
}
