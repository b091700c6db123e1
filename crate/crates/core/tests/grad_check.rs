//! Finite-difference verification of every differentiable tensor op and of
//! the full transformer training loss. The oracle lives in `common`; each
//! check compares reverse-mode gradients against 64-bit central differences
//! at relative tolerance 1e-4.

mod common;

use common::FD_TOL;

#[test]
fn matmul_matches_central_differences() {
    assert!(common::fd_matmul() <= FD_TOL);
}

#[test]
fn batched_matmul_matches_central_differences() {
    assert!(common::fd_matmul_batched() <= FD_TOL);
}

#[test]
fn add_matches_central_differences() {
    assert!(common::fd_add() <= FD_TOL);
}

#[test]
fn broadcast_add_sums_gradients_over_broadcast_dims() {
    assert!(common::fd_add_broadcast() <= FD_TOL);
}

#[test]
fn mul_matches_central_differences() {
    assert!(common::fd_mul() <= FD_TOL);
}

#[test]
fn broadcast_mul_matches_central_differences() {
    assert!(common::fd_mul_broadcast() <= FD_TOL);
}

#[test]
fn scale_matches_central_differences() {
    assert!(common::fd_scale() <= FD_TOL);
}

#[test]
fn relu_matches_central_differences_away_from_the_kink() {
    assert!(common::fd_relu() <= FD_TOL);
}

#[test]
fn softmax_matches_central_differences() {
    assert!(common::fd_softmax() <= FD_TOL);
}

#[test]
fn layer_norm_matches_central_differences_for_x_gain_and_bias() {
    assert!(common::fd_layer_norm() <= FD_TOL);
}

#[test]
fn embedding_gather_accumulates_repeated_rows() {
    assert!(common::fd_embedding_gather() <= FD_TOL);
}

#[test]
fn dropout_with_a_fixed_mask_matches_central_differences() {
    assert!(common::fd_dropout() <= FD_TOL);
}

#[test]
fn sum_matches_central_differences() {
    assert!(common::fd_sum() <= FD_TOL);
}

#[test]
fn reshape_matches_central_differences() {
    assert!(common::fd_reshape() <= FD_TOL);
}

#[test]
fn swap_axes_matches_central_differences() {
    assert!(common::fd_swap_axes() <= FD_TOL);
}

#[test]
fn masked_fill_zeroes_gradients_on_filled_positions() {
    assert!(common::fd_masked_fill() <= FD_TOL);
}

#[test]
fn cross_entropy_matches_central_differences_and_skips_ignored_rows() {
    assert!(common::fd_cross_entropy() <= FD_TOL);
}

/// End-to-end: the teacher-forced cross-entropy through a 1+1-layer, 2-head,
/// d_model=8 model, checked at every parameter element.
#[test]
fn transformer_loss_matches_central_differences_at_every_parameter() {
    let (worst, elements) = common::transformer_fd();
    assert!(worst <= FD_TOL);
    // Guard against the check silently shrinking: this model has 4 embedding
    // tables, one encoder layer, one decoder layer, and the output projection.
    assert!(elements > 1500, "only {elements} parameter elements checked");
}
