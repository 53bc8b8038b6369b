//! Hop-aware per-batch message passing with seed-row publication.
//!
//! One sweep runs every (batch, hop) cell through a shared per-layer weight;
//! seed rows are published into the store as each batch finishes, so later
//! batches in the same sweep — and every batch in the next sweep — read the
//! freshest available embeddings. The ablation variant skips the store and
//! threads each batch's activations locally instead.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::graph::{BatchSet, Graph};
use crate::model::params::BoundParams;
use crate::model::store::EmbeddingStore;
use crate::model::ModelSpec;
use crate::rng::RngState;
use crate::sparse::{CsrMatrix, SpmmMode};
use crate::tensor::Tensor;

/// One round of hop-k message passing: relu(Â · Z_in · W) with Â weighted
/// per `mode`. Rows with zero hop-degree aggregate nothing and come out zero.
pub fn gnn_hop_layer(
    tape: &mut Tape,
    mat: &CsrMatrix,
    mode: SpmmMode,
    z_in: Var,
    w: Var,
) -> Result<Var> {
    let agg = tape.spmm(mat, mode, z_in);
    let proj = tape.matmul(agg, w)?;
    Ok(tape.relu(proj))
}

/// Plain-tensor twin of [`gnn_hop_layer`] for gradient-free callers.
pub fn gnn_hop_layer_tensor(
    mat: &CsrMatrix,
    mode: SpmmMode,
    z_in: &Tensor,
    w: &Tensor,
) -> Result<Tensor> {
    Ok(mat.spmm(z_in, mode).matmul(w)?.relu())
}

/// Project (dropped-out) input features and fill every store slot with the
/// result: Z⁰ = relu(dropout(X) · W_in).
pub fn init_embeddings(
    tape: &mut Tape,
    w_in: Var,
    g: &Graph,
    dropout: f64,
    k_max: usize,
    rng: &mut RngState,
    training: bool,
) -> Result<EmbeddingStore> {
    let x = tape.leaf(g.features().clone());
    let xd = tape.dropout(x, dropout, rng, training)?;
    let proj = tape.matmul(xd, w_in)?;
    let z0 = tape.relu(proj);
    Ok(EmbeddingStore::init(z0, k_max))
}

/// Full aggregation pass: returns the k̂+1 token vars (token 0 is Z⁰,
/// token k the final hop-k embeddings) plus the store for inspection.
pub fn cross_batch_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    spec: &ModelSpec,
    g: &Graph,
    bs: &BatchSet,
    rng: &mut RngState,
    training: bool,
) -> Result<(Vec<Var>, EmbeddingStore)> {
    let k_max = bs.k_max();
    let mut store = init_embeddings(tape, bound.w_in, g, spec.dropout, k_max, rng, training)?;

    let tokens = if spec.no_cross_batch {
        no_cross_tokens(tape, bound, spec, bs, &store)?
    } else {
        for (l, &w) in bound.w_layers.iter().enumerate() {
            for batch in bs.batches() {
                for k in 1..=k_max {
                    // sweep 1 reads the hop-agnostic projection; later sweeps
                    // read the freshest hop-k rows (own seeds from the last
                    // sweep, earlier batches' seeds from this one)
                    let z_in = if l == 0 {
                        tape.gather_rows(store.base(), batch.members.clone())
                    } else {
                        store.read_members(tape, k, batch)
                    };
                    let z =
                        gnn_hop_layer(tape, batch.sub_hops.mat(k), spec.normalization, z_in, w)?;
                    store.publish(tape, k, batch, z);
                }
            }
        }
        let mut tokens = Vec::with_capacity(k_max + 1);
        tokens.push(store.base());
        for k in 1..=k_max {
            tokens.push(store.hop(k));
        }
        tokens
    };
    Ok((tokens, store))
}

/// Ablation: every batch runs its own layer stack on its subgraph, threading
/// activations locally; hop tokens are assembled from each batch's final
/// seed rows with no exchange in between.
fn no_cross_tokens(
    tape: &mut Tape,
    bound: &BoundParams,
    spec: &ModelSpec,
    bs: &BatchSet,
    store: &EmbeddingStore,
) -> Result<Vec<Var>> {
    let k_max = bs.k_max();
    let mut tokens = Vec::with_capacity(k_max + 1);
    tokens.push(store.base());
    let mut hop_tokens: Vec<Var> = (1..=k_max).map(|_| store.base()).collect();
    for batch in bs.batches() {
        let members = tape.gather_rows(store.base(), batch.members.clone());
        for k in 1..=k_max {
            let mut z = members;
            for &w in &bound.w_layers {
                z = gnn_hop_layer(tape, batch.sub_hops.mat(k), spec.normalization, z, w)?;
            }
            let seed_rows = tape.gather_rows(z, batch.seed_local.clone());
            hop_tokens[k - 1] =
                tape.scatter_rows(hop_tokens[k - 1], seed_rows, batch.seeds.clone());
        }
    }
    tokens.extend(hop_tokens);
    Ok(tokens)
}
