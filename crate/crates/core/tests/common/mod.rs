//! Shared test support: a 64-bit central finite-difference gradient oracle,
//! an independent n-gram recount, and random corpus builders.

#![allow(dead_code)] // each test binary pulls in its own subset

use mtrx_core::model::{ForwardMode, IdBatch, ModelConfig, TransformerModel};
use mtrx_core::preprocess::{Origin, ParallelCorpus, SentencePair};
use mtrx_core::rng::Rng;
use mtrx_core::tensor::{cross_entropy, Tensor};
use mtrx_core::vocab::PAD_ID;

/// Relative-error gate for every finite-difference comparison.
pub const FD_TOL: f64 = 1e-4;

/// Central-difference step. Losses here have O(1) curvature, so this
/// balances truncation error against f64 roundoff.
const FD_STEP: f64 = 1e-5;

/// Name and worst relative error of one finite-difference check.
pub struct FdCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
}

/// Compare reverse-mode gradients of `loss` against central differences,
/// element by element over every input. `loss` must be deterministic: it is
/// re-evaluated many times on perturbed copies of the same data. Panics with
/// context on the first violation of [`FD_TOL`]; returns the worst error.
pub fn check_grads(
    op: &str,
    inputs: &[(&str, Vec<usize>, Vec<f64>)],
    loss: &dyn Fn(&[Tensor<f64>]) -> Tensor<f64>,
) -> f64 {
    let build = |data: &[Vec<f64>]| -> Vec<Tensor<f64>> {
        inputs
            .iter()
            .zip(data)
            .map(|((_, shape, _), d)| Tensor::param(shape, d.clone()))
            .collect()
    };
    let base: Vec<Vec<f64>> = inputs.iter().map(|(_, _, d)| d.clone()).collect();

    let params = build(&base);
    let out = loss(&params);
    assert_eq!(out.numel(), 1, "{op}: loss must reduce to a scalar");
    out.backward();
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let mut worst = 0.0f64;
    for (k, (input_name, _, data)) in inputs.iter().enumerate() {
        for i in 0..data.len() {
            let mut plus = base.clone();
            plus[k][i] += FD_STEP;
            let f_plus = loss(&build(&plus)).item();
            let mut minus = base.clone();
            minus[k][i] -= FD_STEP;
            let f_minus = loss(&build(&minus)).item();
            let fd = (f_plus - f_minus) / (2.0 * FD_STEP);
            let got = analytic[k][i];
            let rel = (got - fd).abs() / fd.abs().max(1.0);
            assert!(
                rel <= FD_TOL,
                "{op}: gradient mismatch at {input_name}[{i}]: \
                 autograd {got:.10e} vs central difference {fd:.10e} (rel err {rel:.3e})"
            );
            worst = worst.max(rel);
        }
    }
    worst
}

pub fn uniform(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

/// Values with magnitude in [0.2, 1.5) and random sign: far enough from
/// relu's kink that an FD_STEP probe never crosses it.
pub fn kink_free(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.uniform(0.2, 1.5);
            if rng.uniform(0.0, 1.0) < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect()
}

/// Reduce a tensor to a scalar through fixed weights, so every output
/// element influences the loss with a distinct coefficient and gradient
/// errors cannot cancel.
pub fn weighted_sum(t: &Tensor<f64>, weights: &[f64]) -> Tensor<f64> {
    let w = Tensor::from_vec(t.shape(), weights.to_vec());
    t.mul(&w).sum()
}

pub fn fd_matmul() -> f64 {
    let mut rng = Rng::seed_from(101);
    let a = ("a", vec![3, 4], uniform(&mut rng, 12, -1.5, 1.5));
    let b = ("b", vec![4, 5], uniform(&mut rng, 20, -1.5, 1.5));
    let w = uniform(&mut rng, 15, -1.0, 1.0);
    check_grads("matmul", &[a, b], &|p| weighted_sum(&p[0].matmul(&p[1]), &w))
}

pub fn fd_matmul_batched() -> f64 {
    let mut rng = Rng::seed_from(102);
    let a = ("a", vec![2, 2, 3, 4], uniform(&mut rng, 48, -1.0, 1.0));
    let b = ("b", vec![2, 2, 4, 2], uniform(&mut rng, 32, -1.0, 1.0));
    let w = uniform(&mut rng, 24, -1.0, 1.0);
    check_grads("matmul (batched)", &[a, b], &|p| {
        weighted_sum(&p[0].matmul(&p[1]), &w)
    })
}

pub fn fd_add() -> f64 {
    let mut rng = Rng::seed_from(103);
    let x = ("x", vec![2, 3, 4], uniform(&mut rng, 24, -1.0, 1.0));
    let y = ("y", vec![2, 3, 4], uniform(&mut rng, 24, -1.0, 1.0));
    let w = uniform(&mut rng, 24, -1.0, 1.0);
    check_grads("add", &[x, y], &|p| weighted_sum(&p[0].add(&p[1]), &w))
}

/// Broadcast add, the bias pattern: gradients for the small side must sum
/// over the broadcast dimensions.
pub fn fd_add_broadcast() -> f64 {
    let mut rng = Rng::seed_from(104);
    let x = ("x", vec![2, 3, 4], uniform(&mut rng, 24, -1.0, 1.0));
    let bias = ("bias", vec![4], uniform(&mut rng, 4, -1.0, 1.0));
    let w = uniform(&mut rng, 24, -1.0, 1.0);
    check_grads("add (broadcast)", &[x, bias], &|p| {
        weighted_sum(&p[0].add(&p[1]), &w)
    })
}

pub fn fd_mul() -> f64 {
    let mut rng = Rng::seed_from(105);
    let x = ("x", vec![3, 5], uniform(&mut rng, 15, -1.5, 1.5));
    let y = ("y", vec![3, 5], uniform(&mut rng, 15, -1.5, 1.5));
    let w = uniform(&mut rng, 15, -1.0, 1.0);
    check_grads("mul", &[x, y], &|p| weighted_sum(&p[0].mul(&p[1]), &w))
}

pub fn fd_mul_broadcast() -> f64 {
    let mut rng = Rng::seed_from(106);
    let x = ("x", vec![2, 3, 4], uniform(&mut rng, 24, -1.5, 1.5));
    let g = ("gain", vec![4], uniform(&mut rng, 4, -1.5, 1.5));
    let w = uniform(&mut rng, 24, -1.0, 1.0);
    check_grads("mul (broadcast)", &[x, g], &|p| {
        weighted_sum(&p[0].mul(&p[1]), &w)
    })
}

pub fn fd_scale() -> f64 {
    let mut rng = Rng::seed_from(107);
    let x = ("x", vec![2, 6], uniform(&mut rng, 12, -2.0, 2.0));
    let w = uniform(&mut rng, 12, -1.0, 1.0);
    check_grads("scale", &[x], &|p| weighted_sum(&p[0].scale(1.0 / 8f64.sqrt()), &w))
}

pub fn fd_relu() -> f64 {
    let mut rng = Rng::seed_from(108);
    let x = ("x", vec![3, 6], kink_free(&mut rng, 18));
    let w = uniform(&mut rng, 18, -1.0, 1.0);
    check_grads("relu", &[x], &|p| weighted_sum(&p[0].relu(), &w))
}

pub fn fd_softmax() -> f64 {
    let mut rng = Rng::seed_from(109);
    let x = ("x", vec![2, 3, 5], uniform(&mut rng, 30, -3.0, 3.0));
    let w = uniform(&mut rng, 30, -1.0, 1.0);
    check_grads("softmax_lastdim", &[x], &|p| {
        weighted_sum(&p[0].softmax_lastdim(), &w)
    })
}

pub fn fd_layer_norm() -> f64 {
    let mut rng = Rng::seed_from(110);
    let x = ("x", vec![4, 6], uniform(&mut rng, 24, -2.0, 2.0));
    let gain = ("gain", vec![6], uniform(&mut rng, 6, 0.5, 1.5));
    let bias = ("bias", vec![6], uniform(&mut rng, 6, -0.5, 0.5));
    let w = uniform(&mut rng, 24, -1.0, 1.0);
    check_grads("layer_norm", &[x, gain, bias], &|p| {
        weighted_sum(&p[0].layer_norm(&p[1], &p[2], 1e-5), &w)
    })
}

/// Repeated ids make the gather gradient accumulate into one table row.
pub fn fd_embedding_gather() -> f64 {
    let mut rng = Rng::seed_from(111);
    let table = ("table", vec![7, 4], uniform(&mut rng, 28, -1.0, 1.0));
    let ids: Vec<u32> = vec![1, 3, 3, 0, 6, 2];
    let w = uniform(&mut rng, 24, -1.0, 1.0);
    check_grads("embedding_gather", &[table], &|p| {
        weighted_sum(&p[0].embedding_gather(&ids), &w)
    })
}

/// A fixed seed inside the loss makes the dropout mask identical across the
/// oracle's re-evaluations, so the kept elements' 1/(1-p) scaling is checked.
pub fn fd_dropout() -> f64 {
    let mut rng = Rng::seed_from(112);
    let x = ("x", vec![3, 5], uniform(&mut rng, 15, -1.5, 1.5));
    let w = uniform(&mut rng, 15, -1.0, 1.0);
    check_grads("dropout", &[x], &|p| {
        let mut mask_rng = Rng::seed_from(99);
        weighted_sum(&p[0].dropout(0.4, true, &mut mask_rng), &w)
    })
}

pub fn fd_sum() -> f64 {
    let mut rng = Rng::seed_from(113);
    let x = ("x", vec![2, 3], uniform(&mut rng, 6, -2.0, 2.0));
    check_grads("sum", &[x], &|p| p[0].sum())
}

pub fn fd_reshape() -> f64 {
    let mut rng = Rng::seed_from(114);
    let x = ("x", vec![2, 6], uniform(&mut rng, 12, -2.0, 2.0));
    let w = uniform(&mut rng, 12, -1.0, 1.0);
    check_grads("reshape", &[x], &|p| weighted_sum(&p[0].reshape(&[4, 3]), &w))
}

pub fn fd_swap_axes() -> f64 {
    let mut rng = Rng::seed_from(115);
    let x = ("x", vec![2, 3, 4], uniform(&mut rng, 24, -2.0, 2.0));
    let w = uniform(&mut rng, 24, -1.0, 1.0);
    check_grads("swap_axes", &[x], &|p| weighted_sum(&p[0].swap_axes(1, 2), &w))
}

/// Lower-triangular broadcast mask; filled positions must get zero gradient.
pub fn fd_masked_fill() -> f64 {
    let mut rng = Rng::seed_from(116);
    let x = ("x", vec![2, 2, 3, 3], uniform(&mut rng, 36, -1.5, 1.5));
    let mask: Vec<bool> = (0..3)
        .flat_map(|r| (0..3).map(move |c| c <= r))
        .collect();
    let w = uniform(&mut rng, 36, -1.0, 1.0);
    check_grads("masked_fill", &[x], &|p| {
        weighted_sum(&p[0].masked_fill(&mask, &[1, 1, 3, 3], 0.25), &w)
    })
}

/// Includes an ignored row: its logits must get exactly zero gradient.
pub fn fd_cross_entropy() -> f64 {
    let mut rng = Rng::seed_from(117);
    let logits = ("logits", vec![6, 5], uniform(&mut rng, 30, -2.0, 2.0));
    let targets: Vec<u32> = vec![2, 4, PAD_ID, 1, 3, 2];
    check_grads("cross_entropy", &[logits], &|p| {
        cross_entropy(&p[0], &targets, PAD_ID)
    })
}

/// Every differentiable tensor op, checked against the oracle.
pub fn all_op_checks() -> Vec<FdCheck> {
    vec![
        FdCheck { name: "matmul", max_rel_err: fd_matmul() },
        FdCheck { name: "matmul (batched)", max_rel_err: fd_matmul_batched() },
        FdCheck { name: "add", max_rel_err: fd_add() },
        FdCheck { name: "add (broadcast)", max_rel_err: fd_add_broadcast() },
        FdCheck { name: "mul", max_rel_err: fd_mul() },
        FdCheck { name: "mul (broadcast)", max_rel_err: fd_mul_broadcast() },
        FdCheck { name: "scale", max_rel_err: fd_scale() },
        FdCheck { name: "relu", max_rel_err: fd_relu() },
        FdCheck { name: "softmax_lastdim", max_rel_err: fd_softmax() },
        FdCheck { name: "layer_norm", max_rel_err: fd_layer_norm() },
        FdCheck { name: "embedding_gather", max_rel_err: fd_embedding_gather() },
        FdCheck { name: "dropout", max_rel_err: fd_dropout() },
        FdCheck { name: "sum", max_rel_err: fd_sum() },
        FdCheck { name: "reshape", max_rel_err: fd_reshape() },
        FdCheck { name: "swap_axes", max_rel_err: fd_swap_axes() },
        FdCheck { name: "masked_fill", max_rel_err: fd_masked_fill() },
        FdCheck { name: "cross_entropy", max_rel_err: fd_cross_entropy() },
    ]
}

/// Finite-difference check of the full training loss through a 1+1-layer,
/// 2-head, d_model=8 transformer, over every parameter element. The batch
/// carries real padding on both sides and pad labels, so mask and
/// ignore-index gradients are exercised. Returns (worst rel err, elements).
pub fn transformer_fd() -> (f64, usize) {
    let config = ModelConfig {
        d_model: 8,
        n_heads: 2,
        n_encoder_layers: 1,
        n_decoder_layers: 1,
        max_seq_len: 8,
        expansion: 2,
        dropout_p: 0.0,
        src_vocab_size: 9,
        tgt_vocab_size: 9,
    };
    let mut rng = Rng::seed_from(416);
    let mut model: TransformerModel<f64> = TransformerModel::new(config, &mut rng).unwrap();

    let src = IdBatch::new(vec![1, 4, 5, 6, 2, 1, 7, 8, 2, 0], 2, 5);
    let dec_in = IdBatch::new(vec![1, 5, 4, 8, 1, 6, 7, 0], 2, 4);
    let labels: Vec<u32> = vec![5, 4, 8, 2, 6, 7, 2, 0];

    let loss_of = |m: &TransformerModel<f64>| {
        let logits = m.forward(&src, &dec_in, &mut ForwardMode::Eval).unwrap();
        cross_entropy(&logits.reshape(&[8, 9]), &labels, PAD_ID)
    };

    // Per parameter: name, shape, values, autodiff gradient.
    type ParamSnapshot = (String, Vec<usize>, Vec<f64>, Vec<f64>);

    model.clear_grads();
    loss_of(&model).backward();
    let snapshot: Vec<ParamSnapshot> = model
        .parameters()
        .iter()
        .map(|(name, t)| {
            let grad = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
            (name.clone(), t.shape().to_vec(), t.data().to_vec(), grad)
        })
        .collect();

    let set = |m: &mut TransformerModel<f64>, k: usize, shape: &[usize], data: Vec<f64>| {
        *m.parameters_mut()[k].1 = Tensor::param(shape, data);
    };

    let mut worst = 0.0f64;
    let mut elements = 0usize;
    for (k, (name, shape, data, grad)) in snapshot.iter().enumerate() {
        for i in 0..data.len() {
            let mut plus = data.clone();
            plus[i] += FD_STEP;
            set(&mut model, k, shape, plus);
            let f_plus = loss_of(&model).item();
            let mut minus = data.clone();
            minus[i] -= FD_STEP;
            set(&mut model, k, shape, minus);
            let f_minus = loss_of(&model).item();
            let fd = (f_plus - f_minus) / (2.0 * FD_STEP);
            let rel = (grad[i] - fd).abs() / fd.abs().max(1.0);
            assert!(
                rel <= FD_TOL,
                "transformer loss: gradient mismatch at {name}[{i}]: \
                 autograd {:.10e} vs central difference {fd:.10e} (rel err {rel:.3e})",
                grad[i]
            );
            worst = worst.max(rel);
            elements += 1;
        }
        set(&mut model, k, shape, data.clone());
    }
    (worst, elements)
}

/// Clipped n-gram counts by brute-force slice scans, with no hash maps:
/// an independent recount of what `clipped_precision` computes.
pub fn brute_force_counts(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    n: usize,
) -> (u64, u64) {
    let occurrences = |hay: &[String], gram: &[String]| -> u64 {
        if hay.len() < gram.len() {
            return 0;
        }
        hay.windows(gram.len()).filter(|w| *w == gram).count() as u64
    };
    let mut matched = 0u64;
    let mut total = 0u64;
    for (cand, reference) in candidates.iter().zip(references) {
        if cand.len() < n {
            continue;
        }
        total += (cand.len() - n + 1) as u64;
        for i in 0..=cand.len() - n {
            let gram = &cand[i..i + n];
            // Count each distinct gram once, at its first occurrence.
            let first = (0..=cand.len() - n).find(|&j| &cand[j..j + n] == gram);
            if first != Some(i) {
                continue;
            }
            matched += occurrences(cand, gram).min(occurrences(reference, gram));
        }
    }
    (matched, total)
}

/// Random token sequences over a small lexicon, lengths in [min_len, max_len].
pub fn random_sentences(
    rng: &mut Rng,
    count: usize,
    lexicon: &[&str],
    min_len: usize,
    max_len: usize,
) -> Vec<Vec<String>> {
    (0..count)
        .map(|_| {
            let len = min_len + rng.next_usize(max_len - min_len + 1);
            (0..len)
                .map(|_| lexicon[rng.next_usize(lexicon.len())].to_string())
                .collect()
        })
        .collect()
}

/// A messy random corpus: occasional empty sides, overlong sides, and
/// duplicated pairs, as the cleaning stages expect to see.
pub fn random_messy_corpus(rng: &mut Rng, pairs: usize) -> ParallelCorpus {
    let lexicon = ["der", "die", "das", "gold", "preis", "hoch", "tief", "markt"];
    let mut out: Vec<SentencePair> = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let roll = rng.uniform(0.0, 1.0);
        if roll < 0.1 && !out.is_empty() {
            let dup = out[rng.next_usize(out.len())].clone();
            out.push(dup);
            continue;
        }
        let src_len = if roll < 0.18 {
            0
        } else if roll < 0.26 {
            81 + rng.next_usize(10)
        } else {
            1 + rng.next_usize(9)
        };
        let tgt_len = 1 + rng.next_usize(9);
        let sentence = |len: usize, rng: &mut Rng| -> Vec<String> {
            (0..len)
                .map(|_| lexicon[rng.next_usize(lexicon.len())].to_string())
                .collect()
        };
        out.push(SentencePair {
            source: sentence(src_len, rng),
            target: sentence(tgt_len, rng),
            origin: Origin::InDomain,
        });
    }
    ParallelCorpus::from_pairs(out)
}
