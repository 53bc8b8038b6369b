//! Globally shared per-node, per-hop embedding table.
//!
//! The store lives on the tape as one var per slot; a publish replaces a
//! slot with a scatter node whose backward zeroes the overwritten rows.
//! That scatter is the hard gate: rows that were never published keep their
//! initialization (and its gradient path), published rows belong entirely to
//! the batch that produced them.

use crate::autodiff::{Tape, Var};
use crate::graph::Batch;

pub struct EmbeddingStore {
    /// Hop-agnostic initial projection, written once.
    base: Var,
    /// One n × d slot per hop, index k−1.
    hops: Vec<Var>,
}

impl EmbeddingStore {
    /// All hop slots start as the initial projection.
    pub fn init(base: Var, k_max: usize) -> EmbeddingStore {
        EmbeddingStore {
            base,
            hops: vec![base; k_max],
        }
    }

    pub fn base(&self) -> Var {
        self.base
    }

    /// Current hop-k slot, k 1-based.
    pub fn hop(&self, k: usize) -> Var {
        self.hops[k - 1]
    }

    pub fn k_max(&self) -> usize {
        self.hops.len()
    }

    /// Gather the hop-k rows of a batch's members.
    pub fn read_members(&self, tape: &mut Tape, k: usize, batch: &Batch) -> Var {
        tape.gather_rows(self.hop(k), batch.members.clone())
    }

    /// Overwrite the hop-k rows of `batch`'s seed nodes with the matching
    /// rows of `z_local` (batch-local layout). No other row is touched.
    pub fn publish(&mut self, tape: &mut Tape, k: usize, batch: &Batch, z_local: Var) {
        let seed_rows = tape.gather_rows(z_local, batch.seed_local.clone());
        self.hops[k - 1] = tape.scatter_rows(self.hop(k), seed_rows, batch.seeds.clone());
    }
}
