//! End-to-end forward pass: aggregation sweeps, stacked scan blocks, and the
//! linear classifier head.

use crate::autodiff::{ParamSet, Tape, Var};
use crate::error::Result;
use crate::graph::{BatchSet, Graph};
use crate::model::block::comba_block_forward;
use crate::model::cross_batch::cross_batch_forward;
use crate::model::params::{BoundParams, ModelParams, ModelSpec};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Full model forward to per-node logits (N × classes). In training mode the
/// input projection applies dropout; otherwise the pass is deterministic.
pub fn comba_forward(
    tape: &mut Tape,
    bound: &BoundParams,
    spec: &ModelSpec,
    g: &Graph,
    bs: &BatchSet,
    rng: &mut RngState,
    training: bool,
) -> Result<Var> {
    let (mut tokens, _store) = cross_batch_forward(tape, bound, spec, g, bs, rng, training)?;
    let mut pooled = tokens[0];
    for block in &bound.blocks {
        let (x_prime, next) = comba_block_forward(tape, block, spec, bs, &tokens)?;
        pooled = x_prime;
        tokens = next;
    }
    tape.linear(pooled, bound.w_head, Some(bound.b_head))
}

/// Evaluation convenience: bind, run without dropout, return plain logits.
pub fn eval_logits(mp: &ModelParams, ps: &ParamSet, g: &Graph, bs: &BatchSet) -> Result<Tensor> {
    let mut tape = Tape::new();
    let mut bindings = Vec::new();
    let bound = mp.bind(&mut tape, ps, &mut bindings);
    let mut rng = RngState::new(0); // untouched: dropout is off in eval
    let logits = comba_forward(&mut tape, &bound, &mp.spec, g, bs, &mut rng, false)?;
    Ok(tape.value(logits).clone())
}
