//! Tensor operations and their backward rules.
//!
//! Every op validates shapes eagerly and panics with a message naming the
//! offending shapes: shape errors are programming errors, not runtime
//! conditions. Broadcasting is limited to size-1 dimensions after
//! left-padding the shorter shape, which covers batched matmul, bias
//! addition and attention masks.

use super::{
    broadcast_out_shape, broadcast_strides, for_each_broadcast, for_each_broadcast2, pad_shape,
    Scalar, Tensor,
};
use crate::rng::Rng;

impl<E: Scalar> Tensor<E> {
    /// Batched matrix product: `[..., m, k] x [..., k, n] -> [..., m, n]`.
    ///
    /// Batch dimensions must agree or broadcast from size 1.
    pub fn matmul(&self, other: &Tensor<E>) -> Tensor<E> {
        let sa = self.shape();
        let sb = other.shape();
        assert!(
            sa.len() >= 2 && sb.len() >= 2,
            "matmul requires rank >= 2 operands: lhs {sa:?} rhs {sb:?}"
        );
        let m = sa[sa.len() - 2];
        let k = sa[sa.len() - 1];
        let kb = sb[sb.len() - 2];
        let n = sb[sb.len() - 1];
        assert_eq!(k, kb, "matmul shape mismatch: lhs {sa:?} rhs {sb:?}");

        let batch_rank = sa.len().max(sb.len()) - 2;
        let ba = pad_shape(&sa[..sa.len() - 2], batch_rank);
        let bb = pad_shape(&sb[..sb.len() - 2], batch_rank);
        let out_batch: Vec<usize> = ba
            .iter()
            .zip(&bb)
            .map(|(&da, &db)| {
                assert!(
                    da == db || da == 1 || db == 1,
                    "matmul shape mismatch: lhs {sa:?} rhs {sb:?}"
                );
                da.max(db)
            })
            .collect();
        // Strides in whole matrices, scaled to flat element offsets.
        let a_strides: Vec<usize> = broadcast_strides(&ba).iter().map(|s| s * m * k).collect();
        let b_strides: Vec<usize> = broadcast_strides(&bb).iter().map(|s| s * k * n).collect();

        let batch_numel: usize = out_batch.iter().product();
        let mut data = vec![E::zero(); batch_numel * m * n];
        {
            let a = self.data();
            let b = other.data();
            for_each_broadcast2(&out_batch, &a_strides, &b_strides, |bi, abase, bbase| {
                let obase = bi * m * n;
                for i in 0..m {
                    for kk in 0..k {
                        let aik = a[abase + i * k + kk];
                        let brow = &b[bbase + kk * n..bbase + kk * n + n];
                        let orow = &mut data[obase + i * n..obase + i * n + n];
                        for (o, &bv) in orow.iter_mut().zip(brow) {
                            *o = *o + aik * bv;
                        }
                    }
                }
            });
        }

        let mut out_shape = out_batch.clone();
        out_shape.push(m);
        out_shape.push(n);
        let pa = self.clone();
        let pb = other.clone();
        let need_a = self.requires_grad();
        let need_b = other.requires_grad();
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |up| {
                let a = pa.data();
                let b = pb.data();
                let mut da = if need_a {
                    Some(vec![E::zero(); a.len()])
                } else {
                    None
                };
                let mut db = if need_b {
                    Some(vec![E::zero(); b.len()])
                } else {
                    None
                };
                // dA = dC Bᵀ and dB = Aᵀ dC per batch slice; accumulation
                // over the broadcast batch dims falls out of the shared
                // (stride-0) base offsets.
                for_each_broadcast2(&out_batch, &a_strides, &b_strides, |bi, abase, bbase| {
                    let obase = bi * m * n;
                    for i in 0..m {
                        for j in 0..n {
                            let g = up[obase + i * n + j];
                            if let Some(da) = da.as_mut() {
                                for kk in 0..k {
                                    da[abase + i * k + kk] =
                                        da[abase + i * k + kk] + g * b[bbase + kk * n + j];
                                }
                            }
                            if let Some(db) = db.as_mut() {
                                for kk in 0..k {
                                    db[bbase + kk * n + j] =
                                        db[bbase + kk * n + j] + g * a[abase + i * k + kk];
                                }
                            }
                        }
                    }
                });
                vec![da, db]
            }),
        )
    }

    /// Elementwise sum with size-1 broadcasting.
    pub fn add(&self, other: &Tensor<E>) -> Tensor<E> {
        self.elementwise(other, "add", |a, b| a + b, |_, _| E::one(), |_, _| E::one())
    }

    /// Elementwise (Hadamard) product with size-1 broadcasting.
    pub fn mul(&self, other: &Tensor<E>) -> Tensor<E> {
        self.elementwise(other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    /// Shared machinery for binary elementwise ops. `dfa`/`dfb` map the two
    /// operand values to the local derivative wrt that operand.
    fn elementwise(
        &self,
        other: &Tensor<E>,
        name: &'static str,
        f: fn(E, E) -> E,
        dfa: fn(E, E) -> E,
        dfb: fn(E, E) -> E,
    ) -> Tensor<E> {
        let out_shape = broadcast_out_shape(name, self.shape(), other.shape());
        let rank = out_shape.len();
        let a_strides = broadcast_strides(&pad_shape(self.shape(), rank));
        let b_strides = broadcast_strides(&pad_shape(other.shape(), rank));

        let numel: usize = out_shape.iter().product();
        let mut data = vec![E::zero(); numel];
        {
            let a = self.data();
            let b = other.data();
            for_each_broadcast2(&out_shape, &a_strides, &b_strides, |o, ia, ib| {
                data[o] = f(a[ia], b[ib]);
            });
        }

        let pa = self.clone();
        let pb = other.clone();
        let need_a = self.requires_grad();
        let need_b = other.requires_grad();
        let shape = out_shape.clone();
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |up| {
                let a = pa.data();
                let b = pb.data();
                let mut da = if need_a {
                    Some(vec![E::zero(); a.len()])
                } else {
                    None
                };
                let mut db = if need_b {
                    Some(vec![E::zero(); b.len()])
                } else {
                    None
                };
                for_each_broadcast2(&shape, &a_strides, &b_strides, |o, ia, ib| {
                    if let Some(da) = da.as_mut() {
                        da[ia] = da[ia] + up[o] * dfa(a[ia], b[ib]);
                    }
                    if let Some(db) = db.as_mut() {
                        db[ib] = db[ib] + up[o] * dfb(a[ia], b[ib]);
                    }
                });
                vec![da, db]
            }),
        )
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, factor: E) -> Tensor<E> {
        let data: Vec<E> = self.data().iter().map(|&x| x * factor).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| vec![Some(up.iter().map(|&u| u * factor).collect())]),
        )
    }

    /// Elementwise max(0, x). The gradient at exactly 0 is 0.
    pub fn relu(&self) -> Tensor<E> {
        let data: Vec<E> = self
            .data()
            .iter()
            .map(|&x| if x > E::zero() { x } else { E::zero() })
            .collect();
        let src = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| {
                let g = src
                    .data()
                    .iter()
                    .zip(up)
                    .map(|(&x, &u)| if x > E::zero() { u } else { E::zero() })
                    .collect();
                vec![Some(g)]
            }),
        )
    }

    /// Softmax over the last dimension, computed with max-subtraction.
    ///
    /// -inf entries (masked positions) get exactly zero probability. A row
    /// that is entirely -inf has no distribution to normalize and panics:
    /// masks must always leave at least one attendable position.
    pub fn softmax_lastdim(&self) -> Tensor<E> {
        let shape = self.shape().to_vec();
        let d = *shape.last().expect("softmax_lastdim requires rank >= 1");
        assert!(d >= 1, "softmax_lastdim requires a nonempty last dimension, got {shape:?}");
        let rows = self.numel() / d;
        let mut data = vec![E::zero(); self.numel()];
        for r in 0..rows {
            let row = &self.data()[r * d..(r + 1) * d];
            let mut mx = E::neg_infinity();
            for &x in row {
                if x > mx {
                    mx = x;
                }
            }
            assert!(
                mx > E::neg_infinity(),
                "softmax_lastdim: row {r} is fully masked (all -inf)"
            );
            let out_row = &mut data[r * d..(r + 1) * d];
            let mut sum = E::zero();
            for (o, &x) in out_row.iter_mut().zip(row) {
                let e = (x - mx).exp();
                *o = e;
                sum = sum + e;
            }
            for o in out_row.iter_mut() {
                *o = *o / sum;
            }
        }

        let y = data.clone();
        Tensor::from_op(
            shape,
            data,
            vec![self.clone()],
            Box::new(move |up| {
                // dx_i = y_i (up_i - Σ_j up_j y_j) per row.
                let mut g = vec![E::zero(); y.len()];
                for r in 0..rows {
                    let base = r * d;
                    let mut dot = E::zero();
                    for i in 0..d {
                        dot = dot + up[base + i] * y[base + i];
                    }
                    for i in 0..d {
                        g[base + i] = y[base + i] * (up[base + i] - dot);
                    }
                }
                vec![Some(g)]
            }),
        )
    }

    /// Layer normalization over the last dimension with learnable gain and
    /// bias vectors, using the biased variance estimate.
    pub fn layer_norm(&self, gain: &Tensor<E>, bias: &Tensor<E>, eps: E) -> Tensor<E> {
        let shape = self.shape().to_vec();
        let d = *shape.last().expect("layer_norm requires rank >= 1");
        assert_eq!(
            gain.shape(),
            &[d],
            "layer_norm gain shape {:?} must match last dimension of {shape:?}",
            gain.shape()
        );
        assert_eq!(
            bias.shape(),
            &[d],
            "layer_norm bias shape {:?} must match last dimension of {shape:?}",
            bias.shape()
        );
        let rows = self.numel() / d;
        let inv_d = E::one() / E::from_f64(d as f64);

        let mut xhat = vec![E::zero(); self.numel()];
        let mut inv_std = vec![E::zero(); rows];
        let mut data = vec![E::zero(); self.numel()];
        {
            let x = self.data();
            let g = gain.data();
            let b = bias.data();
            for r in 0..rows {
                let row = &x[r * d..(r + 1) * d];
                let mut mean = E::zero();
                for &v in row {
                    mean = mean + v;
                }
                mean = mean * inv_d;
                let mut var = E::zero();
                for &v in row {
                    let c = v - mean;
                    var = var + c * c;
                }
                var = var * inv_d;
                let s = E::one() / (var + eps).sqrt();
                inv_std[r] = s;
                for i in 0..d {
                    let h = (row[i] - mean) * s;
                    xhat[r * d + i] = h;
                    data[r * d + i] = g[i] * h + b[i];
                }
            }
        }

        let pg = gain.clone();
        Tensor::from_op(
            shape,
            data,
            vec![self.clone(), gain.clone(), bias.clone()],
            Box::new(move |up| {
                let g = pg.data();
                let mut dx = vec![E::zero(); xhat.len()];
                let mut dgain = vec![E::zero(); d];
                let mut dbias = vec![E::zero(); d];
                for (r, &s) in inv_std.iter().enumerate().take(rows) {
                    let base = r * d;
                    // dxhat plus the two row means needed by the chain rule
                    // through mean and variance.
                    let mut m1 = E::zero();
                    let mut m2 = E::zero();
                    for i in 0..d {
                        let u = up[base + i];
                        let h = xhat[base + i];
                        dgain[i] = dgain[i] + u * h;
                        dbias[i] = dbias[i] + u;
                        let dh = u * g[i];
                        m1 = m1 + dh;
                        m2 = m2 + dh * h;
                    }
                    m1 = m1 * inv_d;
                    m2 = m2 * inv_d;
                    for i in 0..d {
                        let dh = up[base + i] * g[i];
                        dx[base + i] = s * (dh - m1 - xhat[base + i] * m2);
                    }
                }
                vec![Some(dx), Some(dgain), Some(dbias)]
            }),
        )
    }

    /// Row lookup into a `[vocab, d]` table: output row i is `table[ids[i]]`.
    ///
    /// Backward scatters output-row gradients back into the table, so
    /// repeated ids accumulate.
    pub fn embedding_gather(&self, ids: &[u32]) -> Tensor<E> {
        let shape = self.shape();
        assert_eq!(
            shape.len(),
            2,
            "embedding_gather requires a [vocab, d] table, got {shape:?}"
        );
        let v = shape[0];
        let d = shape[1];
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let row = id as usize;
            assert!(
                row < v,
                "embedding id {id} out of range for vocabulary of size {v}"
            );
            data.extend_from_slice(&self.data()[row * d..(row + 1) * d]);
        }
        let ids = ids.to_vec();
        Tensor::from_op(
            vec![ids.len(), d],
            data,
            vec![self.clone()],
            Box::new(move |up| {
                let mut grad = vec![E::zero(); v * d];
                for (i, &id) in ids.iter().enumerate() {
                    let dst = id as usize * d;
                    for j in 0..d {
                        grad[dst + j] = grad[dst + j] + up[i * d + j];
                    }
                }
                vec![Some(grad)]
            }),
        )
    }

    /// Inverted dropout: zero each element with probability `p`, scale
    /// survivors by 1/(1-p). Identity (and no RNG draws) when not training
    /// or when p == 0.
    pub fn dropout(&self, p: f64, training: bool, rng: &mut Rng) -> Tensor<E> {
        assert!(
            (0.0..1.0).contains(&p),
            "dropout probability must satisfy 0 <= p < 1, got {p}"
        );
        if !training || p == 0.0 {
            return self.clone();
        }
        let keep_scale = E::from_f64(1.0 / (1.0 - p));
        let mask: Vec<E> = (0..self.numel())
            .map(|_| if rng.next_f64() < p { E::zero() } else { keep_scale })
            .collect();
        let data: Vec<E> = self.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |up| {
                vec![Some(up.iter().zip(&mask).map(|(&u, &m)| u * m).collect())]
            }),
        )
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&self) -> Tensor<E> {
        let total: E = self.data().iter().copied().sum();
        let numel = self.numel();
        Tensor::from_op(
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |up| vec![Some(vec![up[0]; numel])]),
        )
    }

    /// Same data, new shape. Element counts must match.
    pub fn reshape(&self, new_shape: &[usize]) -> Tensor<E> {
        let new_numel: usize = new_shape.iter().product();
        assert_eq!(
            self.numel(),
            new_numel,
            "reshape shape mismatch: {:?} has {} elements, {new_shape:?} has {new_numel}",
            self.shape(),
            self.numel()
        );
        Tensor::from_op(
            new_shape.to_vec(),
            self.data().to_vec(),
            vec![self.clone()],
            Box::new(move |up| vec![Some(up.to_vec())]),
        )
    }

    /// Exchange two axes (a data copy, not a view).
    pub fn swap_axes(&self, ax0: usize, ax1: usize) -> Tensor<E> {
        let rank = self.shape().len();
        assert!(
            ax0 < rank && ax1 < rank,
            "swap_axes({ax0}, {ax1}) out of range for shape {:?}",
            self.shape()
        );
        let mut out_shape = self.shape().to_vec();
        out_shape.swap(ax0, ax1);
        let mut src_strides = broadcast_strides(self.shape());
        src_strides.swap(ax0, ax1);

        let mut data = vec![E::zero(); self.numel()];
        {
            let x = self.data();
            for_each_broadcast(&out_shape, &src_strides, |o, s| data[o] = x[s]);
        }
        let shape = out_shape.clone();
        let numel = self.numel();
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |up| {
                let mut g = vec![E::zero(); numel];
                for_each_broadcast(&shape, &src_strides, |o, s| g[s] = up[o]);
                vec![Some(g)]
            }),
        )
    }

    /// Replace every element whose mask position is `false` with `value`;
    /// positions where the mask is `true` pass through (value and gradient).
    /// The mask broadcasts over size-1 dimensions.
    pub fn masked_fill(&self, mask: &[bool], mask_shape: &[usize], value: E) -> Tensor<E> {
        let mask_numel: usize = mask_shape.iter().product();
        assert_eq!(
            mask.len(),
            mask_numel,
            "masked_fill mask shape {mask_shape:?} requires {mask_numel} entries, got {}",
            mask.len()
        );
        let shape = self.shape().to_vec();
        assert!(
            mask_shape.len() <= shape.len(),
            "masked_fill mask {mask_shape:?} does not broadcast over {shape:?}"
        );
        let padded = pad_shape(mask_shape, shape.len());
        for (&md, &xd) in padded.iter().zip(&shape) {
            assert!(
                md == xd || md == 1,
                "masked_fill mask {mask_shape:?} does not broadcast over {shape:?}"
            );
        }
        let strides = broadcast_strides(&padded);

        let mut data = self.data().to_vec();
        let mask = mask.to_vec();
        for_each_broadcast(&shape, &strides, |o, s| {
            if !mask[s] {
                data[o] = value;
            }
        });
        let out_shape = shape.clone();
        Tensor::from_op(
            out_shape,
            data,
            vec![self.clone()],
            Box::new(move |up| {
                let mut g = up.to_vec();
                for_each_broadcast(&shape, &strides, |o, s| {
                    if !mask[s] {
                        g[o] = E::zero();
                    }
                });
                vec![Some(g)]
            }),
        )
    }
}

/// Mean cross-entropy over rows of `[n, v]` logits, skipping positions whose
/// target is `ignore_id`. Softmax and the log arithmetic are fused through a
/// log-sum-exp, so saturated logits stay finite.
pub fn cross_entropy<E: Scalar>(logits: &Tensor<E>, targets: &[u32], ignore_id: u32) -> Tensor<E> {
    let shape = logits.shape();
    assert_eq!(shape.len(), 2, "cross_entropy expects [n, v] logits, got {shape:?}");
    let n = shape[0];
    let v = shape[1];
    assert_eq!(
        n,
        targets.len(),
        "cross_entropy: {n} logit rows but {} targets",
        targets.len()
    );

    let mut lse = vec![E::zero(); n];
    let mut total = E::zero();
    let mut count = 0usize;
    {
        let x = logits.data();
        for (r, &t) in targets.iter().enumerate() {
            if t == ignore_id {
                continue;
            }
            assert!(
                (t as usize) < v,
                "cross_entropy target {t} out of range for {v} classes"
            );
            let row = &x[r * v..(r + 1) * v];
            let mut mx = E::neg_infinity();
            for &e in row {
                if e > mx {
                    mx = e;
                }
            }
            let mut sum = E::zero();
            for &e in row {
                sum = sum + (e - mx).exp();
            }
            let l = mx + sum.ln();
            lse[r] = l;
            total = total + (l - row[t as usize]);
            count += 1;
        }
    }
    assert!(
        count > 0,
        "cross_entropy: every position carries the ignore id {ignore_id}"
    );
    let loss = total / E::from_f64(count as f64);

    let src = logits.clone();
    let targets = targets.to_vec();
    Tensor::from_op(
        vec![1],
        vec![loss],
        vec![logits.clone()],
        Box::new(move |up| {
            // d loss / d logit = (softmax - onehot) / count on scored rows,
            // recomputing probabilities from the saved log-sum-exp.
            let u = up[0] / E::from_f64(count as f64);
            let x = src.data();
            let mut g = vec![E::zero(); n * v];
            for (r, &t) in targets.iter().enumerate() {
                if t == ignore_id {
                    continue;
                }
                let base = r * v;
                for j in 0..v {
                    let p = (x[base + j] - lse[r]).exp();
                    let delta = if j == t as usize { E::one() } else { E::zero() };
                    g[base + j] = u * (p - delta);
                }
            }
            vec![Some(g)]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
        assert_eq!(actual.len(), expected.len());
        for (i, (&a, &e)) in actual.iter().zip(expected).enumerate() {
            assert!(
                (a - e).abs() <= tol,
                "element {i}: got {a}, expected {e} (tolerance {tol})"
            );
        }
    }

    fn panic_message<F: FnOnce()>(f: F) -> String {
        let err = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .expect_err("expected a panic");
        err.downcast_ref::<String>()
            .cloned()
            .or_else(|| err.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default()
    }

    #[test]
    fn matmul_identity_left() {
        let a = Tensor::<f64>::from_vec(&[3, 3], vec![2.0, -1.0, 0.5, 3.0, 4.0, -2.5, 0.0, 1.0, 7.0]);
        let eye = Tensor::<f64>::from_vec(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(eye.matmul(&a).data(), a.data());
    }

    #[test]
    fn matmul_hand_computed() {
        let a = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let eye = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(a.matmul(&eye).data(), &[1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::<f64>::from_vec(&[2, 1], vec![5.0, 6.0]);
        assert_eq!(a.matmul(&b).data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_identity_insertion_is_bitwise() {
        let a = Tensor::<f64>::from_vec(&[2, 3], vec![0.1, -2.7, 3.3, 1e-7, 42.0, -0.9]);
        let b = Tensor::<f64>::from_vec(&[3, 2], vec![5.5, 0.25, -1.1, 2.0, 0.0, 9.0]);
        let eye = Tensor::<f64>::from_vec(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(a.matmul(&eye).matmul(&b).data(), a.matmul(&b).data());
    }

    #[test]
    fn matmul_batch_broadcast_from_size_one() {
        // [2,2,2] batch against a single shared [2,2] rhs.
        let a = Tensor::<f64>::from_vec(&[2, 2, 2], vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 2.0]);
        let b = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let c = a.matmul(&b);
        assert_eq!(c.shape(), &[2, 2, 2]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[4, 5]);
        let msg = panic_message(move || {
            a.matmul(&b);
        });
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "message was: {msg}");
    }

    #[test]
    fn matmul_gradient_sums_counterpart_rows() {
        // loss = sum(a b): d loss/d a[i,k] = Σ_j b[k,j], d loss/d b[k,j] = Σ_i a[i,k].
        let a = Tensor::param(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        let b = Tensor::param(&[2, 2], vec![10.0f64, 20.0, 30.0, 40.0]);
        a.matmul(&b).sum().backward();
        assert_eq!(a.grad().unwrap(), vec![30.0, 70.0, 30.0, 70.0]);
        assert_eq!(b.grad().unwrap(), vec![4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn matmul_broadcast_batch_accumulates_gradient() {
        let a = Tensor::param(&[2, 1, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        let b = Tensor::param(&[2, 1], vec![1.0f64, 1.0]);
        a.matmul(&b).sum().backward();
        // Each batch slice contributes b's column sums to a, and a's values to b.
        assert_eq!(a.grad().unwrap(), vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(b.grad().unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn softmax_symmetry_and_stability() {
        let t = Tensor::<f64>::from_vec(&[4], vec![0.0; 4]).softmax_lastdim();
        assert_close(t.data(), &[0.25; 4], 1e-12);
        let big = Tensor::<f64>::from_vec(&[2], vec![1000.0, 1000.0]).softmax_lastdim();
        assert_close(big.data(), &[0.5, 0.5], 1e-12);
    }

    #[test]
    fn softmax_closed_form() {
        let t = Tensor::<f64>::from_vec(&[2], vec![0.0, 3.0f64.ln()]).softmax_lastdim();
        assert_close(t.data(), &[0.25, 0.75], 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let vals = vec![0.3, -1.7, 2.2, 0.0, 5.1, -3.3];
        let t = Tensor::<f64>::from_vec(&[2, 3], vals.clone()).softmax_lastdim();
        for r in 0..2 {
            let s: f64 = t.data()[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "row {r} sums to {s}");
        }
        let shifted: Vec<f64> = vals.iter().map(|v| v + 123.456).collect();
        let t2 = Tensor::<f64>::from_vec(&[2, 3], shifted).softmax_lastdim();
        assert_close(t2.data(), t.data(), 1e-6);
    }

    #[test]
    fn softmax_masked_position_is_exactly_zero() {
        let t = Tensor::<f64>::from_vec(&[3], vec![1.0, f64::NEG_INFINITY, 2.0]).softmax_lastdim();
        assert_eq!(t.data()[1], 0.0);
        assert!((t.data()[0] + t.data()[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_fully_masked_row_panics() {
        let msg = panic_message(|| {
            Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, f64::NEG_INFINITY, f64::NEG_INFINITY])
                .softmax_lastdim();
        });
        assert!(msg.contains("fully masked"), "message was: {msg}");
    }

    #[test]
    fn softmax_of_constant_sum_has_zero_gradient() {
        // sum(softmax(x)) == 1 for any x, so the gradient must vanish.
        let x = Tensor::param(&[3], vec![0.2f64, -1.0, 3.0]);
        x.softmax_lastdim().sum().backward();
        for &g in &x.grad().unwrap() {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_constant_vector_collapses_to_bias() {
        let x = Tensor::<f64>::from_vec(&[2, 4], vec![2.5; 8]);
        let gain = Tensor::<f64>::from_vec(&[4], vec![1.0; 4]);
        let bias = Tensor::<f64>::from_vec(&[4], vec![0.0; 4]);
        let y = x.layer_norm(&gain, &bias, 1e-12);
        assert_close(y.data(), &[0.0; 8], 1e-9);
    }

    #[test]
    fn layer_norm_unit_stats_pass_through() {
        let x = Tensor::<f64>::from_vec(&[1, 2], vec![1.0, -1.0]);
        let gain = Tensor::<f64>::from_vec(&[2], vec![1.0; 2]);
        let bias = Tensor::<f64>::from_vec(&[2], vec![0.0; 2]);
        let y = x.layer_norm(&gain, &bias, 1e-12);
        assert_close(y.data(), &[1.0, -1.0], 1e-6);
    }

    #[test]
    fn layer_norm_zero_gain_broadcasts_bias() {
        let x = Tensor::<f64>::from_vec(&[2, 3], vec![9.0, -4.0, 0.7, 1.0, 2.0, 3.0]);
        let gain = Tensor::<f64>::from_vec(&[3], vec![0.0; 3]);
        let bias = Tensor::<f64>::from_vec(&[3], vec![5.0, 6.0, 7.0]);
        let y = x.layer_norm(&gain, &bias, 1e-5);
        assert_eq!(y.data(), &[5.0, 6.0, 7.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn layer_norm_output_is_normalized() {
        let x = Tensor::<f64>::from_vec(&[1, 4], vec![10.0, 20.0, 30.0, 40.0]);
        let gain = Tensor::<f64>::from_vec(&[4], vec![1.0; 4]);
        let bias = Tensor::<f64>::from_vec(&[4], vec![0.0; 4]);
        let y = x.layer_norm(&gain, &bias, 1e-9);
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        let var: f64 = y.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn relu_examples() {
        let t = Tensor::<f64>::from_vec(&[3], vec![-1.0, 0.0, 2.0]).relu();
        assert_eq!(t.data(), &[0.0, 0.0, 2.0]);
        let pos = Tensor::<f64>::from_vec(&[2], vec![0.5, 3.0]).relu();
        assert_eq!(pos.data(), &[0.5, 3.0]);
    }

    #[test]
    fn relu_gradient_is_zero_at_zero_and_negative() {
        let x = Tensor::param(&[3], vec![-1.0f64, 0.0, 2.0]);
        x.relu().sum().backward();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn gather_duplicates_and_empty() {
        let table = Tensor::<f64>::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let out = table.embedding_gather(&[0, 0]);
        assert_eq!(out.shape(), &[2, 3]);
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let empty = table.embedding_gather(&[]);
        assert_eq!(empty.shape(), &[0, 3]);
        assert_eq!(empty.numel(), 0);
    }

    #[test]
    fn gather_out_of_range_names_id_and_size() {
        let table = Tensor::<f64>::zeros(&[5, 2]);
        let msg = panic_message(move || {
            table.embedding_gather(&[7]);
        });
        assert!(msg.contains('7') && msg.contains('5'), "message was: {msg}");
    }

    #[test]
    fn gather_repeated_id_accumulates_gradient() {
        let table = Tensor::param(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        table.embedding_gather(&[0, 0, 1]).sum().backward();
        assert_eq!(table.grad().unwrap(), vec![2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn dropout_identity_cases_are_exact() {
        let mut rng = Rng::seed_from(7);
        let x = Tensor::<f32>::from_vec(&[4], vec![1.0, -2.0, 3.0, 0.0]);
        let eval = x.dropout(0.5, false, &mut rng);
        assert_eq!(eval.data(), x.data());
        let p0 = x.dropout(0.0, true, &mut rng);
        assert_eq!(p0.data(), x.data());
    }

    #[test]
    fn dropout_preserves_mean_statistically() {
        let mut rng = Rng::seed_from(42);
        let n = 100_000;
        let x = Tensor::<f64>::from_vec(&[n], vec![1.0; n]);
        let y = x.dropout(0.5, true, &mut rng);
        let mean: f64 = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean drifted to {mean}");
    }

    #[test]
    fn dropout_invalid_probability_panics() {
        let mut rng = Rng::seed_from(1);
        let x = Tensor::<f32>::zeros(&[2]);
        let msg = panic_message(move || {
            x.dropout(1.0, true, &mut rng);
        });
        assert!(msg.contains("probability"), "message was: {msg}");
    }

    #[test]
    fn dropout_gradient_uses_the_same_mask() {
        let mut rng = Rng::seed_from(3);
        let x = Tensor::param(&[1000], vec![1.0f64; 1000]);
        let y = x.dropout(0.5, true, &mut rng);
        y.sum().backward();
        let grad = x.grad().unwrap();
        for (g, &v) in grad.iter().zip(y.data()) {
            assert_eq!(*g, v, "gradient must equal the applied mask scale");
        }
    }

    #[test]
    fn cross_entropy_uniform_is_ln_v() {
        let logits = Tensor::<f64>::zeros(&[2, 7]);
        let loss = cross_entropy(&logits, &[3, 0], 9);
        assert!((loss.item() - 7.0f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_saturated_correct_prediction() {
        let logits = Tensor::<f64>::from_vec(&[1, 3], vec![1000.0, 0.0, 0.0]);
        let loss = cross_entropy(&logits, &[0], 9);
        assert!(loss.item() < 1e-9);
    }

    #[test]
    fn cross_entropy_ignored_row_contributes_nothing() {
        let data = vec![0.3, -0.7, 1.2, 9.0, 9.0, 9.0];
        let both = Tensor::<f64>::from_vec(&[2, 3], data.clone());
        let with_ignore = cross_entropy(&both, &[2, 0], 0);
        let single = Tensor::<f64>::from_vec(&[1, 3], data[..3].to_vec());
        let alone = cross_entropy(&single, &[2], 0);
        assert!((with_ignore.item() - alone.item()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_ignored_row_gets_zero_gradient() {
        let logits = Tensor::param(&[2, 3], vec![0.1f64, 0.2, 0.3, 5.0, 5.0, 5.0]);
        cross_entropy(&logits, &[1, 0], 0).backward();
        let g = logits.grad().unwrap();
        assert_eq!(&g[3..], &[0.0, 0.0, 0.0]);
        assert!(g[..3].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn cross_entropy_all_ignored_panics() {
        let logits = Tensor::<f64>::zeros(&[2, 3]);
        let msg = panic_message(move || {
            cross_entropy(&logits, &[0, 0], 0);
        });
        assert!(msg.contains("ignore"), "message was: {msg}");
    }

    #[test]
    fn cross_entropy_target_out_of_range_panics() {
        let logits = Tensor::<f64>::zeros(&[1, 3]);
        let msg = panic_message(move || {
            cross_entropy(&logits, &[3], 9);
        });
        assert!(msg.contains('3'), "message was: {msg}");
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let logits = Tensor::param(&[1, 2], vec![0.0f64, 0.0]);
        cross_entropy(&logits, &[0], 9).backward();
        assert_close(&logits.grad().unwrap(), &[-0.5, 0.5], 1e-12);
    }

    #[test]
    fn scale_forward_and_backward() {
        let x = Tensor::param(&[3], vec![1.0f64, -2.0, 0.5]);
        let y = x.scale(3.0);
        assert_eq!(y.data(), &[3.0, -6.0, 1.5]);
        y.sum().backward();
        assert_eq!(x.grad().unwrap(), vec![3.0; 3]);
    }

    #[test]
    fn add_broadcasts_bias_and_accumulates_gradient() {
        let x = Tensor::param(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        let b = Tensor::param(&[2], vec![10.0f64, 20.0]);
        let y = x.add(&b);
        assert_eq!(y.data(), &[11.0, 22.0, 13.0, 24.0]);
        y.sum().backward();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn mul_gradients_exchange_operands() {
        let a = Tensor::param(&[2], vec![3.0f64, 4.0]);
        let b = Tensor::param(&[2], vec![5.0f64, 6.0]);
        a.mul(&b).sum().backward();
        assert_eq!(a.grad().unwrap(), vec![5.0, 6.0]);
        assert_eq!(b.grad().unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn elementwise_shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 4]);
        let msg = panic_message(move || {
            a.add(&b);
        });
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 4]"), "message was: {msg}");
    }

    #[test]
    fn reshape_roundtrip_with_gradient() {
        let x = Tensor::param(&[2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = x.reshape(&[3, 2]);
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), x.data());
        y.sum().backward();
        assert_eq!(x.grad().unwrap(), vec![1.0; 6]);
        let msg = panic_message(move || {
            y.reshape(&[4]);
        });
        assert!(msg.contains("[4]"), "message was: {msg}");
    }

    #[test]
    fn swap_axes_transposes_and_routes_gradient() {
        let x = Tensor::param(&[2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = x.swap_axes(0, 1);
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        // Weight the transposed entries so the routed gradient is visible.
        let w = Tensor::from_vec(&[3, 2], vec![1.0f64, 10.0, 2.0, 20.0, 3.0, 30.0]);
        t.mul(&w).sum().backward();
        assert_eq!(x.grad().unwrap(), vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn swap_axes_middle_dimensions() {
        let x = Tensor::<f64>::from_vec(&[2, 2, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let y = x.swap_axes(1, 2);
        assert_eq!(y.shape(), &[2, 2, 2]);
        assert_eq!(y.data(), &[0.0, 2.0, 1.0, 3.0, 4.0, 6.0, 5.0, 7.0]);
    }

    #[test]
    fn masked_fill_broadcasts_and_blocks_gradient() {
        let x = Tensor::param(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        // Mask shape [1, 2]: second column is not attendable anywhere.
        let y = x.masked_fill(&[true, false], &[1, 2], f64::NEG_INFINITY);
        assert_eq!(y.data(), &[1.0, f64::NEG_INFINITY, 3.0, f64::NEG_INFINITY]);
        let z = x.masked_fill(&[true, false], &[1, 2], 0.0);
        z.sum().backward();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn masked_fill_rejects_non_broadcastable_mask() {
        let x = Tensor::<f64>::zeros(&[2, 2]);
        let msg = panic_message(move || {
            x.masked_fill(&[true, false, true], &[3], 0.0);
        });
        assert!(msg.contains("broadcast"), "message was: {msg}");
    }
}
