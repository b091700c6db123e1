//! German-English neural machine translation, built from first principles.
//!
//! The crate provides everything between raw parallel text and a BLEU score:
//!
//! - [`tensor`]: a dense tensor engine with reverse-mode automatic
//!   differentiation, just large enough to express a Transformer.
//! - [`preprocess`]: punctuation normalization, tokenization, corpus
//!   cleaning, deduplication, splitting, and corpus mixing.
//! - [`vocab`]: word-level vocabularies with reserved special tokens.
//! - [`model`]: the Transformer encoder-decoder with multi-head attention,
//!   padding and look-ahead masks.
//! - [`training`]: batching, Adam, the training loop with early stopping,
//!   and the corpus-augmentation experiment harness.
//! - [`checkpoint`]: a versioned binary container for model, optimizer
//!   state, and vocabularies.
//! - [`decode`]: greedy autoregressive translation.
//! - [`bleu`]: corpus-level BLEU with clipped n-gram precision and
//!   brevity penalty.

pub mod bleu;
pub mod checkpoint;
pub mod decode;
pub mod error;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Scalar, Tensor};
