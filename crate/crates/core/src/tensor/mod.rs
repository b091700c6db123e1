//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable n-dimensional array (row-major) plus an
//! optional gradient accumulator. Every operation records its parents and a
//! backward closure, so calling [`Tensor::backward`] on a scalar result
//! populates gradients on all reachable leaves that require them.
//!
//! Element type is generic: `f32` is the working precision for training and
//! inference, `f64` exists for gradient verification against finite
//! differences (central differences are unreliable at 32 bits).
//!
//! Broadcasting is deliberately narrow: binary elementwise ops and the batch
//! dimensions of `matmul` broadcast only where a dimension is exactly 1
//! after left-padding the shorter shape. Nothing else broadcasts.

mod ops;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};

pub use ops::cross_entropy;

/// Element type of a tensor: `f32` for training, `f64` for verification.
pub trait Scalar:
    num_traits::Float + std::iter::Sum + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Backward closure: upstream gradient in, one optional gradient per parent out.
type BackwardFn<E> = Box<dyn Fn(&[E]) -> Vec<Option<Vec<E>>> + Send + Sync>;

struct Node<E: Scalar> {
    shape: Vec<usize>,
    data: Vec<E>,
    grad: Mutex<Option<Vec<E>>>,
    requires_grad: bool,
    parents: Vec<Tensor<E>>,
    backward_fn: Option<BackwardFn<E>>,
}

/// An immutable dense tensor participating in a computation graph.
///
/// Cloning is cheap (shared node). Data never changes after construction;
/// only the gradient slot accumulates, additively, across backward passes.
pub struct Tensor<E: Scalar = f32>(Arc<Node<E>>);

impl<E: Scalar> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor(Arc::clone(&self.0))
    }
}

impl<E: Scalar> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<E: Scalar> Tensor<E> {
    /// Constant leaf tensor (no gradient).
    pub fn from_vec(shape: &[usize], data: Vec<E>) -> Tensor<E> {
        Self::leaf(shape, data, false)
    }

    /// Learnable leaf tensor (receives gradients).
    pub fn param(shape: &[usize], data: Vec<E>) -> Tensor<E> {
        Self::leaf(shape, data, true)
    }

    fn leaf(shape: &[usize], data: Vec<E>, requires_grad: bool) -> Tensor<E> {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor shape {:?} requires {} elements, got {}",
            shape,
            numel,
            data.len()
        );
        Tensor(Arc::new(Node {
            shape: shape.to_vec(),
            data,
            grad: Mutex::new(None),
            requires_grad,
            parents: Vec::new(),
            backward_fn: None,
        }))
    }

    pub fn zeros(shape: &[usize]) -> Tensor<E> {
        Self::from_vec(shape, vec![E::zero(); shape.iter().product()])
    }

    pub fn full(shape: &[usize], value: E) -> Tensor<E> {
        Self::from_vec(shape, vec![value; shape.iter().product()])
    }

    pub fn scalar(value: E) -> Tensor<E> {
        Self::from_vec(&[1], vec![value])
    }

    /// Result of an operation. Parents that do not require gradients make
    /// the output a constant with no recorded history.
    fn from_op(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward_fn: BackwardFn<E>,
    ) -> Tensor<E> {
        let numel: usize = shape.iter().product();
        debug_assert_eq!(numel, data.len());
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        let (parents, backward_fn) = if requires_grad {
            (parents, Some(backward_fn))
        } else {
            (Vec::new(), None)
        };
        Tensor(Arc::new(Node {
            shape,
            data,
            grad: Mutex::new(None),
            requires_grad,
            parents,
            backward_fn,
        }))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[E] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> E {
        assert_eq!(
            self.numel(),
            1,
            "item() requires a scalar tensor, got shape {:?}",
            self.shape()
        );
        self.0.data[0]
    }

    /// Snapshot of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<E>> {
        self.0.grad.lock().unwrap().clone()
    }

    /// Reset the gradient accumulator.
    pub fn clear_grad(&self) {
        *self.0.grad.lock().unwrap() = None;
    }

    /// Overwrite the gradient accumulator directly; tests use this to
    /// exercise code paths that real backward passes cannot reach.
    #[cfg(test)]
    pub(crate) fn inject_grad(&self, grad: Vec<E>) {
        assert_eq!(grad.len(), self.numel());
        *self.0.grad.lock().unwrap() = Some(grad);
    }

    fn ptr_id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    fn accumulate_into(slot: &Mutex<Option<Vec<E>>>, delta: &[E]) {
        let mut guard = slot.lock().unwrap();
        match guard.as_mut() {
            Some(acc) => {
                for (a, d) in acc.iter_mut().zip(delta) {
                    *a = *a + *d;
                }
            }
            None => *guard = Some(delta.to_vec()),
        }
    }

    /// Reverse-mode gradient propagation from a scalar root.
    ///
    /// Each call pushes a fresh unit gradient through the recorded graph and
    /// adds the result into every reachable `requires_grad` leaf's
    /// accumulator, so two calls without [`Tensor::clear_grad`] double the
    /// stored gradients. Intermediate results do not retain gradients.
    pub fn backward(&self) {
        assert_eq!(
            self.numel(),
            1,
            "backward requires a scalar root, got shape {:?}",
            self.shape()
        );
        if !self.0.requires_grad {
            return;
        }

        let order = self.topo_order();

        // Per-run flows keep repeated backward calls independent; persistent
        // accumulators only ever receive this run's contribution once.
        let mut flows: HashMap<usize, Vec<E>> = HashMap::new();
        flows.insert(self.ptr_id(), vec![E::one()]);

        for node in order.iter().rev() {
            let Some(flow) = flows.get(&node.ptr_id()).cloned() else {
                continue;
            };
            if let Some(backward_fn) = node.0.backward_fn.as_ref() {
                let parent_grads = backward_fn(&flow);
                debug_assert_eq!(parent_grads.len(), node.0.parents.len());
                for (parent, pg) in node.0.parents.iter().zip(parent_grads) {
                    if !parent.0.requires_grad {
                        continue;
                    }
                    if let Some(pg) = pg {
                        debug_assert_eq!(pg.len(), parent.numel());
                        match flows.get_mut(&parent.ptr_id()) {
                            Some(acc) => {
                                for (a, d) in acc.iter_mut().zip(&pg) {
                                    *a = *a + *d;
                                }
                            }
                            None => {
                                flows.insert(parent.ptr_id(), pg);
                            }
                        }
                    }
                }
            }
        }

        for node in &order {
            if node.0.backward_fn.is_none() {
                if let Some(flow) = flows.get(&node.ptr_id()) {
                    Self::accumulate_into(&node.0.grad, flow);
                }
            }
        }
    }

    /// Post-order over the graph: every node appears after all of its
    /// parents, so reverse iteration visits consumers before producers.
    fn topo_order(&self) -> Vec<Tensor<E>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor<E>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.ptr_id());
        while let Some((node, next_parent)) = stack.pop() {
            if let Some(parent) = node.0.parents.get(next_parent) {
                let parent = parent.clone();
                stack.push((node, next_parent + 1));
                if parent.0.requires_grad && visited.insert(parent.ptr_id()) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }
}

// Broadcast helpers shared by the ops module.

/// Left-pad a shape with 1s to `rank` dimensions.
pub(crate) fn pad_shape(shape: &[usize], rank: usize) -> Vec<usize> {
    let mut padded = vec![1; rank];
    padded[rank - shape.len()..].copy_from_slice(shape);
    padded
}

/// Row-major strides, with stride 0 on size-1 dims so broadcast reads
/// pin to index 0.
pub(crate) fn broadcast_strides(padded: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; padded.len()];
    let mut acc = 1;
    for (d, &size) in padded.iter().enumerate().rev() {
        if size != 1 {
            strides[d] = acc;
        }
        acc *= size;
    }
    strides
}

/// Output shape of an elementwise broadcast, panicking with both operand
/// shapes on a mismatch.
fn broadcast_out_shape(op: &str, a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let pa = pad_shape(a, rank);
    let pb = pad_shape(b, rank);
    pa.iter()
        .zip(&pb)
        .map(|(&da, &db)| {
            assert!(
                da == db || da == 1 || db == 1,
                "{op} shape mismatch: lhs {a:?} rhs {b:?}"
            );
            da.max(db)
        })
        .collect()
}

/// Visits every flat output index together with the flat source index of a
/// broadcast operand, using an odometer instead of per-element div/mod.
fn for_each_broadcast<F: FnMut(usize, usize)>(out_shape: &[usize], src_strides: &[usize], mut f: F) {
    for_each_broadcast2(out_shape, src_strides, src_strides, |out, src, _| f(out, src));
}

/// Two-operand variant of [`for_each_broadcast`]: walks the output space once
/// while tracking a flat source index per operand.
pub(crate) fn for_each_broadcast2<F: FnMut(usize, usize, usize)>(
    out_shape: &[usize],
    a_strides: &[usize],
    b_strides: &[usize],
    mut f: F,
) {
    let numel: usize = out_shape.iter().product();
    if numel == 0 {
        return;
    }
    let rank = out_shape.len();
    let mut counters = vec![0usize; rank];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for out in 0..numel {
        f(out, ia, ib);
        for d in (0..rank).rev() {
            counters[d] += 1;
            ia += a_strides[d];
            ib += b_strides[d];
            if counters[d] < out_shape[d] {
                break;
            }
            ia -= counters[d] * a_strides[d];
            ib -= counters[d] * b_strides[d];
            counters[d] = 0;
        }
    }
}
