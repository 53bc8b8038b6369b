//! COMBA: selective state-space models over multi-hop graph neighborhoods.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`] / [`sparse`]: dense and pattern-sparse numeric kernels.
//! - [`autodiff`]: a small tape-based reverse-mode engine over those kernels.
//! - [`graph`]: exact-distance hop adjacencies and seed-ball batching.
//! - [`model`]: the shared embedding store, cross-batch message passing,
//!   selective scan over the hop axis, and the full network.
//! - [`train`]: configs, metrics, the training loop, ablations, scaling runs.
//! - [`theorem`]: empirical check of the cross-batch approximation bound.
//! - [`data`]: dataset formats, synthetic generators, checkpoints.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod rng;
pub mod sparse;
pub mod tensor;
pub mod theorem;
pub mod train;

pub use error::{Error, Result};
pub use graph::Graph;
pub use model::{ModelParams, ModelSpec};
pub use rng::RngState;
pub use sparse::{CsrMatrix, SpmmMode};
pub use tensor::Tensor;
