//! Manifold expansion replay for continual learning.
//!
//! The crate provides the pieces of a rehearsal-based continual learner and a
//! small benchmark harness around them:
//!
//! - [`nn`]: a fixed three-layer MLP with hand-written backward pass and SGD,
//!   split into a feature extractor and a linear classifier.
//! - [`losses`]: cross-entropy, the paired 2-Wasserstein feature distance,
//!   and the combined replay objective.
//! - [`memory`]: the episodic buffer with manifold-expansion, reservoir and
//!   ring update policies.
//! - [`datasets`]: MNIST IDX loading and permuted / rotated / split /
//!   synthetic task streams.
//! - [`harness`]: the task-by-task training loop and ACC / BWT metrics.
//! - [`experiment`]: grid runner, CSV outputs and summary tables behind the
//!   `maer` binary.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

pub mod datasets;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod losses;
pub mod memory;
pub mod metrics;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
