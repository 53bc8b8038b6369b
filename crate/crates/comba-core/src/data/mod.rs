//! Dataset files, synthetic generators, and checkpoints.

pub mod checkpoint;
pub mod dataset;
pub mod synthetic;

pub use checkpoint::{
    load_checkpoint, restore_into, restore_model, save_checkpoint, Checkpoint, NamedTensor,
};
pub use dataset::{load_dataset, save_dataset, DatasetBundle, DatasetMeta};
pub use synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
