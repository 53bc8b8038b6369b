//! Tape-based reverse-mode differentiation over a small closed op set.
//!
//! Forward calls push nodes onto a [`Tape`]; [`Tape::backward`] walks the
//! nodes in reverse creation order accumulating gradients. Each op carries
//! its own backward rule as a closure, so custom ops (the selective scan
//! lives in the model layer) can be added through [`Tape::push_op`] without
//! touching this file.

mod adam;
mod gradcheck;
mod param;

pub use adam::{adam_step, AdamHyper};
pub use gradcheck::{grad_check, GradCheckReport};
pub use param::{ParamId, ParamSet, Parameter};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::sparse::{CsrMatrix, SpmmMode};
use crate::tensor::{
    expm1_over_x, expm1_over_x_deriv, layer_norm_backward, layer_norm_forward, sigmoid, Tensor,
};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// grad-of-output, parent values, output value → grad per parent.
pub type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Grads {
    by_node: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node[v.0].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Leaf with no backward rule; gradients stop here (but are still
    /// recorded, so parameter leaves use this too).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_node(value, Vec::new(), None)
    }

    /// Register an op with an explicit backward rule. Parents must already
    /// live on this tape. The backward closure receives (grad wrt output,
    /// parent values in the given order, output value) and must return one
    /// gradient per parent, each shaped like that parent.
    pub fn push_op(&mut self, value: Tensor, parents: Vec<Var>, backward: BackwardFn) -> Var {
        self.push_node(value, parents, Some(backward))
    }

    fn push_node(&mut self, value: Tensor, parents: Vec<Var>, backward: Option<BackwardFn>) -> Var {
        let next = self.nodes.len();
        for p in &parents {
            assert!(p.0 < next, "parent created after child");
        }
        self.nodes.push(Node {
            value,
            parents,
            backward,
        });
        Var(next)
    }

    /// Reverse sweep from a scalar root. Returns gradients for every node
    /// that influences the root (including leaves).
    pub fn backward(&self, root: Var) -> Grads {
        assert_eq!(
            self.value(root).numel(),
            1,
            "backward root must be a scalar"
        );
        let mut by_node: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        by_node.resize_with(self.nodes.len(), || None);
        by_node[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            if by_node[i].is_none() {
                continue;
            }
            let node = &self.nodes[i];
            let Some(bwd) = &node.backward else { continue };
            let parent_grads = {
                let g = by_node[i].as_ref().unwrap();
                let parent_vals: Vec<&Tensor> = node
                    .parents
                    .iter()
                    .map(|p| &self.nodes[p.0].value)
                    .collect();
                bwd(g, &parent_vals, &node.value)
            };
            assert_eq!(parent_grads.len(), node.parents.len(), "backward arity");
            for (p, pg) in node.parents.iter().zip(parent_grads) {
                assert_eq!(
                    pg.shape(),
                    self.nodes[p.0].value.shape(),
                    "backward grad shape for parent"
                );
                match &mut by_node[p.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot => *slot = Some(pg),
                }
            }
        }
        Grads { by_node }
    }

    // ---- elementwise and linear ops ------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b));
        self.push_op(
            value,
            vec![a, b],
            Box::new(|g, _, _| vec![g.clone(), g.clone()]),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).sub(self.value(b));
        self.push_op(
            value,
            vec![a, b],
            Box::new(|g, _, _| vec![g.clone(), g.scale(-1.0)]),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).mul(self.value(b));
        self.push_op(
            value,
            vec![a, b],
            Box::new(|g, p, _| vec![g.mul(p[1]), g.mul(p[0])]),
        )
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        self.push_op(value, vec![a], Box::new(move |g, _, _| vec![g.scale(c)]))
    }

    /// Sum of vars, all the same shape.
    pub fn sum_vars(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty());
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v);
        }
        acc
    }

    /// Arithmetic mean of vars, all the same shape.
    pub fn mean_vars(&mut self, vars: &[Var]) -> Var {
        let s = self.sum_vars(vars);
        self.scale(s, 1.0 / vars.len() as f64)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push_op(
            value,
            vec![a, b],
            Box::new(|g, p, _| vec![g.matmul_nt(p[1]), p[0].matmul_tn(g)]),
        ))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let value = self.value(x).add_bias(self.value(bias));
        self.push_op(
            value,
            vec![x, bias],
            Box::new(|g, _, _| vec![g.clone(), g.col_sum()]),
        )
    }

    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        Ok(match bias {
            Some(b) => self.add_bias(y, b),
            None => y,
        })
    }

    /// Scalar sum of all elements.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push_op(
            value,
            vec![x],
            Box::new(|g, p, _| {
                let s = g.item();
                vec![p[0].map(|_| s)]
            }),
        )
    }

    // ---- nonlinearities -------------------------------------------------

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).relu();
        self.push_op(
            value,
            vec![x],
            Box::new(|g, p, _| vec![g.zip_map(p[0], |gi, xi| if xi > 0.0 { gi } else { 0.0 })]),
        )
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).softplus();
        self.push_op(
            value,
            vec![x],
            Box::new(|g, p, _| vec![g.zip_map(p[0], |gi, xi| gi * sigmoid(xi))]),
        )
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).exp();
        self.push_op(value, vec![x], Box::new(|g, _, out| vec![g.mul(out)]))
    }

    /// Elementwise (e^u − 1)/u, continuous through 0.
    pub fn expm1_over_x(&mut self, x: Var) -> Var {
        let value = self.value(x).map(expm1_over_x);
        self.push_op(
            value,
            vec![x],
            Box::new(|g, p, _| vec![g.zip_map(p[0], |gi, xi| gi * expm1_over_x_deriv(xi))]),
        )
    }

    /// Inverted dropout: training zeroes entries with probability `p` and
    /// scales survivors by 1/(1−p); evaluation is the identity.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut RngState, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mut mask = Tensor::zeros(self.value(x).shape());
        for v in mask.data_mut() {
            *v = if rng.bernoulli(p) { 0.0 } else { keep };
        }
        let value = self.value(x).mul(&mask);
        Ok(self.push_op(value, vec![x], Box::new(move |g, _, _| vec![g.mul(&mask)])))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::invalid(format!(
                "layer_norm eps must be positive, got {eps}"
            )));
        }
        let (value, xhat, inv_std) =
            layer_norm_forward(self.value(x), self.value(gain), self.value(bias), eps);
        Ok(self.push_op(
            value,
            vec![x, gain, bias],
            Box::new(move |g, p, _| {
                let (dx, dgain, dbias) = layer_norm_backward(g, &xhat, &inv_std, p[1]);
                vec![dx, dgain, dbias]
            }),
        ))
    }

    // ---- structural ops -------------------------------------------------

    /// Sparse-times-dense with the matrix held constant; only the dense
    /// operand receives gradient. The adjoint reuses the forward's per-row
    /// weights, so normalization is differentiated consistently.
    pub fn spmm(&mut self, mat: &CsrMatrix, mode: SpmmMode, x: Var) -> Var {
        let value = mat.spmm(self.value(x), mode);
        let mat = mat.clone();
        self.push_op(
            value,
            vec![x],
            Box::new(move |g, _, _| vec![mat.spmm_adjoint(g, mode)]),
        )
    }

    /// Select rows by index; duplicates allowed (their gradients add).
    pub fn gather_rows(&mut self, x: Var, idx: Vec<u32>) -> Var {
        let value = self.value(x).gather_rows(&idx);
        self.push_op(
            value,
            vec![x],
            Box::new(move |g, p, _| {
                let mut dx = Tensor::zeros(p[0].shape());
                let c = dx.cols();
                for (pos, &i) in idx.iter().enumerate() {
                    let dst = dx.row_mut(i as usize);
                    let src = &g.row(pos)[..c];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Overwrite rows of `base` at `idx` with `rows`. Indices must be
    /// unique: an overwritten base row receives no gradient (this is the
    /// hard gate that keeps non-published rows frozen).
    pub fn scatter_rows(&mut self, base: Var, rows: Var, idx: Vec<u32>) -> Var {
        {
            let mut seen = idx.clone();
            seen.sort_unstable();
            assert!(
                seen.windows(2).all(|w| w[0] != w[1]),
                "scatter_rows indices must be unique"
            );
        }
        let value = self.value(base).scatter_rows(self.value(rows), &idx);
        self.push_op(
            value,
            vec![base, rows],
            Box::new(move |g, _, _| {
                let mut dbase = g.clone();
                let c = dbase.cols();
                for &i in &idx {
                    dbase.row_mut(i as usize).iter_mut().for_each(|v| *v = 0.0);
                }
                let mut drows = Tensor::zeros(&[idx.len(), c]);
                for (pos, &i) in idx.iter().enumerate() {
                    drows.row_mut(pos).copy_from_slice(g.row(i as usize));
                }
                vec![dbase, drows]
            }),
        )
    }

    /// Horizontal concatenation; parents may repeat (edge padding), their
    /// gradient slices accumulate.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let widths: Vec<usize> = tensors.iter().map(|t| t.cols()).collect();
        let value = Tensor::concat_cols(&tensors);
        self.push_op(
            value,
            parts.to_vec(),
            Box::new(move |g, _, _| {
                let mut out = Vec::with_capacity(widths.len());
                let mut off = 0;
                for &w in &widths {
                    out.push(g.slice_cols(off, w));
                    off += w;
                }
                out
            }),
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice_cols(start, len);
        self.push_op(
            value,
            vec![x],
            Box::new(move |g, p, _| {
                let mut dx = Tensor::zeros(p[0].shape());
                let full = dx.cols();
                for i in 0..dx.rows() {
                    dx.data_mut()[i * full + start..i * full + start + len]
                        .copy_from_slice(g.row(i));
                }
                vec![dx]
            }),
        )
    }

    /// Each column repeated `r` times side by side.
    pub fn repeat_cols(&mut self, x: Var, r: usize) -> Var {
        let value = self.value(x).repeat_cols(r);
        self.push_op(
            value,
            vec![x],
            Box::new(move |g, _, _| vec![g.sum_col_groups(r)]),
        )
    }

    // ---- loss -----------------------------------------------------------

    /// Mean negative log-likelihood over the masked rows, log-sum-exp
    /// stabilized. Returns a scalar var.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[u32],
        mask: &[u32],
    ) -> Result<Var> {
        let (loss, dlogits) = softmax_cross_entropy(self.value(logits), labels, mask)?;
        Ok(self.push_op(
            Tensor::scalar(loss),
            vec![logits],
            Box::new(move |g, _, _| vec![dlogits.scale(g.item())]),
        ))
    }
}

/// Standalone cross-entropy: (mean masked NLL, gradient wrt logits).
pub fn softmax_cross_entropy(
    logits: &Tensor,
    labels: &[u32],
    mask: &[u32],
) -> Result<(f64, Tensor)> {
    if mask.is_empty() {
        return Err(Error::invalid("cross entropy over an empty mask"));
    }
    let (n, c) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            n
        )));
    }
    let inv = 1.0 / mask.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(&[n, c]);
    for &row in mask {
        let i = row as usize;
        if i >= n {
            return Err(Error::invalid(format!("mask index {i} out of range")));
        }
        let label = labels[i] as usize;
        if label >= c {
            return Err(Error::invalid(format!(
                "label {label} out of range for {c} classes"
            )));
        }
        let r = logits.row(i);
        let max = r.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + r.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += (lse - r[label]) * inv;
        for (j, &v) in r.iter().enumerate() {
            let p = (v - lse).exp();
            let target = if j == label { 1.0 } else { 0.0 };
            grad.set(i, j, (p - target) * inv);
        }
    }
    Ok((loss, grad))
}
