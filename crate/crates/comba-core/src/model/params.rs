//! Architecture description and parameter registry.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::sparse::SpmmMode;

/// Everything needed to rebuild the network shape. Stored verbatim in
/// checkpoints so loading can police compatibility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input feature width.
    pub d_in: usize,
    /// Channel dim d shared by every token.
    pub hidden: usize,
    /// Output classes.
    pub classes: usize,
    /// k̂: number of hop tokens (sequence length is hop_len + 1).
    pub hop_len: usize,
    /// States per channel in the scan.
    pub state_size: usize,
    /// Context half-window w; the output projection reads 2w+1 tokens.
    pub window: usize,
    /// Message-passing layers per sweep (the L of the aggregation loop).
    pub num_layers: usize,
    /// Stacked scan blocks.
    pub num_blocks: usize,
    /// Input-feature dropout probability.
    pub dropout: f64,
    /// Ablation: per-batch stacks with no shared-store exchange.
    pub no_cross_batch: bool,
    /// Ablation: output projection reads only the current token.
    pub no_context_gating: bool,
    /// Neighbor aggregation weighting.
    pub normalization: SpmmMode,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0
            || self.hidden == 0
            || self.classes == 0
            || self.hop_len == 0
            || self.state_size == 0
            || self.num_layers == 0
            || self.num_blocks == 0
        {
            return Err(Error::invalid(
                "model dims (d_in, hidden, classes, hop_len, state_size, num_layers, num_blocks) must be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Sequence length: one projected-feature token plus one per hop.
    pub fn num_tokens(&self) -> usize {
        self.hop_len + 1
    }

    /// Input width of the output-projection map.
    pub fn c_input_width(&self) -> usize {
        if self.no_context_gating {
            self.hidden
        } else {
            (2 * self.window + 1) * self.hidden
        }
    }
}

/// Per-block parameter handles.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
    pub w_a: ParamId,
    pub b_a: ParamId,
    pub w_b: ParamId,
    pub b_b: ParamId,
    pub w_c: ParamId,
    pub b_c: ParamId,
    pub w_delta: ParamId,
    pub b_delta: ParamId,
    pub w_rebuild: ParamId,
}

/// Handles for the whole network inside one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub spec: ModelSpec,
    /// Input projection d_in × d.
    pub w_in: ParamId,
    /// One shared d × d weight per message-passing layer.
    pub w_layers: Vec<ParamId>,
    pub blocks: Vec<BlockParams>,
    /// Classifier head d × C and bias.
    pub w_head: ParamId,
    pub b_head: ParamId,
}

impl ModelParams {
    /// Create all parameters in a fixed, documented order (the checkpoint
    /// order). Weights are Glorot-uniform, biases zero, norm gains one.
    pub fn build(spec: ModelSpec, rng: &mut RngState) -> Result<(ModelParams, ParamSet)> {
        spec.validate()?;
        let d = spec.hidden;
        let dn = d * spec.state_size;
        let mut ps = ParamSet::new();
        let w_in = ps.add_glorot("input.weight", spec.d_in, d, rng);
        let w_layers = (0..spec.num_layers)
            .map(|l| ps.add_glorot(format!("gnn.{l}.weight"), d, d, rng))
            .collect();
        let mut blocks = Vec::with_capacity(spec.num_blocks);
        for b in 0..spec.num_blocks {
            let p = |part: &str| format!("block.{b}.{part}");
            blocks.push(BlockParams {
                ln1_gain: ps.add_ones(p("norm1.gain"), &[d]),
                ln1_bias: ps.add_zeros(p("norm1.bias"), &[d]),
                ln2_gain: ps.add_ones(p("norm2.gain"), &[d]),
                ln2_bias: ps.add_zeros(p("norm2.bias"), &[d]),
                w_a: ps.add_glorot(p("decay.weight"), d, dn, rng),
                b_a: ps.add_zeros(p("decay.bias"), &[dn]),
                w_b: ps.add_glorot(p("input_proj.weight"), d, dn, rng),
                b_b: ps.add_zeros(p("input_proj.bias"), &[dn]),
                w_c: ps.add_glorot(p("output_proj.weight"), spec.c_input_width(), dn, rng),
                b_c: ps.add_zeros(p("output_proj.bias"), &[dn]),
                w_delta: ps.add_glorot(p("step.weight"), d, d, rng),
                b_delta: ps.add_zeros(p("step.bias"), &[d]),
                w_rebuild: ps.add_glorot(p("rebuild.weight"), d, d, rng),
            });
        }
        let w_head = ps.add_glorot("head.weight", d, spec.classes, rng);
        let b_head = ps.add_zeros("head.bias", &[spec.classes]);
        Ok((
            ModelParams {
                spec,
                w_in,
                w_layers,
                blocks,
                w_head,
                b_head,
            },
            ps,
        ))
    }

    /// Put every parameter on the tape once, recording bindings for the
    /// gradient sweep.
    pub fn bind(
        &self,
        tape: &mut Tape,
        ps: &ParamSet,
        bindings: &mut Vec<(ParamId, Var)>,
    ) -> BoundParams {
        let mut bv = |id: ParamId| ps.bind(tape, id, bindings);
        BoundParams {
            w_in: bv(self.w_in),
            w_layers: self.w_layers.iter().map(|&id| bv(id)).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BoundBlock {
                    ln1_gain: bv(b.ln1_gain),
                    ln1_bias: bv(b.ln1_bias),
                    ln2_gain: bv(b.ln2_gain),
                    ln2_bias: bv(b.ln2_bias),
                    w_a: bv(b.w_a),
                    b_a: bv(b.b_a),
                    w_b: bv(b.w_b),
                    b_b: bv(b.b_b),
                    w_c: bv(b.w_c),
                    b_c: bv(b.b_c),
                    w_delta: bv(b.w_delta),
                    b_delta: bv(b.b_delta),
                    w_rebuild: bv(b.w_rebuild),
                })
                .collect(),
            w_head: bv(self.w_head),
            b_head: bv(self.b_head),
        }
    }
}

/// Tape handles for one forward pass.
pub struct BoundParams {
    pub w_in: Var,
    pub w_layers: Vec<Var>,
    pub blocks: Vec<BoundBlock>,
    pub w_head: Var,
    pub b_head: Var,
}

pub struct BoundBlock {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub w_a: Var,
    pub b_a: Var,
    pub w_b: Var,
    pub b_b: Var,
    pub w_c: Var,
    pub b_c: Var,
    pub w_delta: Var,
    pub b_delta: Var,
    pub w_rebuild: Var,
}
