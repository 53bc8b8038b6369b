//! The network: shared-store aggregation sweeps feeding stacked selective
//! scan blocks over the hop axis, closed by a linear classifier head.

pub mod block;
pub mod comba;
pub mod cross_batch;
pub mod params;
pub mod scan;
pub mod store;

pub use block::comba_block_forward;
pub use comba::{comba_forward, eval_logits};
pub use cross_batch::{cross_batch_forward, gnn_hop_layer, gnn_hop_layer_tensor, init_embeddings};
pub use params::{BlockParams, BoundBlock, BoundParams, ModelParams, ModelSpec};
pub use scan::{context_windows, selective_scan, zoh_discretize};
pub use store::EmbeddingStore;

/// Layer-norm variance floor used everywhere in the network.
pub const LN_EPS: f64 = 1e-5;
