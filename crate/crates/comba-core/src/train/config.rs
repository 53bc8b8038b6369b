//! Run configuration and node splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sparse::SpmmMode;

/// Everything that determines a training run besides the dataset. Every
/// field has a default, so config files only need the overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Channel width of every hop token.
    pub hidden_dim: usize,
    /// Message-passing sweeps per forward.
    pub num_layers: usize,
    /// Stacked scan blocks.
    pub num_blocks: usize,
    /// Input-feature dropout probability.
    pub dropout: f64,
    /// k̂: largest hop distance, so sequences hold hop_len + 1 tokens.
    pub hop_len: usize,
    /// m̂: how many batches the node set is split into (seeds are divided
    /// evenly across them).
    pub num_batches: usize,
    /// Context half-window for the output gate.
    pub window: usize,
    /// States per channel in the scan.
    pub state_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation score.
    pub patience: usize,
    pub seed: u64,
    /// Ablation: per-batch stacks with no shared-store exchange.
    pub no_cross_batch: bool,
    /// Ablation: output gate reads only the current token.
    pub no_context_gating: bool,
    /// Neighbor aggregation weighting.
    pub normalization: SpmmMode,
    /// Redraw the seed partition every epoch instead of fixing it per run.
    pub resample_batches: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            hidden_dim: 64,
            num_layers: 2,
            num_blocks: 1,
            dropout: 0.3,
            hop_len: 2,
            num_batches: 10,
            window: 1,
            state_size: 8,
            lr: 1e-3,
            weight_decay: 5e-4,
            max_epochs: 500,
            patience: 50,
            seed: 0,
            no_cross_batch: false,
            no_context_gating: false,
            normalization: SpmmMode::RowNormalized,
            resample_batches: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0
            || self.num_layers == 0
            || self.num_blocks == 0
            || self.hop_len == 0
            || self.num_batches == 0
            || self.state_size == 0
            || self.max_epochs == 0
            || self.patience == 0
        {
            return Err(Error::invalid(
                "hidden_dim, num_layers, num_blocks, hop_len, num_batches, state_size, max_epochs, patience must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::invalid(format!("lr must be ≥ 0, got {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!(
                "weight_decay must be ≥ 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    /// Network shape induced by this config for a given dataset.
    pub fn model_spec(&self, d_in: usize, classes: usize) -> ModelSpec {
        ModelSpec {
            d_in,
            hidden: self.hidden_dim,
            classes,
            hop_len: self.hop_len,
            state_size: self.state_size,
            window: self.window,
            num_layers: self.num_layers,
            num_blocks: self.num_blocks,
            dropout: self.dropout,
            no_cross_batch: self.no_cross_batch,
            no_context_gating: self.no_context_gating,
            normalization: self.normalization,
        }
    }
}

/// Train/validation/test node index lists.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

impl Splits {
    /// Reject out-of-range indices and any overlap between the three lists.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (part, list) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            for &v in list.iter() {
                if (v as usize) >= n {
                    return Err(Error::Validation(format!(
                        "{part} split references node {v} but the graph has {n} nodes"
                    )));
                }
                if seen[v as usize] {
                    return Err(Error::Validation(format!(
                        "node {v} appears in more than one split"
                    )));
                }
                seen[v as usize] = true;
            }
        }
        Ok(())
    }
}
