//! Named trainable parameters with optimizer state.

use crate::autodiff::{Grads, Tape, Var};
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Handle into a [`ParamSet`]; stable for the life of the set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Adam first moment.
    pub m: Tensor,
    /// Adam second moment.
    pub v: Tensor,
    /// Adam step counter (updates applied so far).
    pub step: u64,
}

/// Ordered collection of parameters. Creation order is the serialization
/// order, so checkpoints are deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        let shape = value.shape().to_vec();
        self.params.push(Parameter {
            name,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            step: 0,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform matrix: U(−a, a) with a = √(6/(fan_in + fan_out)).
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut RngState,
    ) -> ParamId {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let mut t = Tensor::zeros(&[rows, cols]);
        t.fill_uniform(rng, -a, a);
        self.add(name, t)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn add_ones(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::filled(shape, 1.0))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn param(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total scalar count across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Put the parameter's current value on a tape as a leaf and remember
    /// the pairing in `bindings` for gradient collection.
    pub fn bind(&self, tape: &mut Tape, id: ParamId, bindings: &mut Vec<(ParamId, Var)>) -> Var {
        let var = tape.leaf(self.params[id.0].value.clone());
        bindings.push((id, var));
        var
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Accumulate tape gradients into the bound parameters.
    pub fn accumulate_grads(&mut self, grads: &Grads, bindings: &[(ParamId, Var)]) {
        for &(id, var) in bindings {
            if let Some(g) = grads.get(var) {
                self.params[id.0].grad.add_assign(g);
            }
        }
    }

    /// Copy of all values (cheap model snapshot for best-epoch restore).
    pub fn snapshot_values(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore_values(&mut self, snapshot: &[Tensor]) {
        assert_eq!(snapshot.len(), self.params.len(), "snapshot size mismatch");
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            assert_eq!(p.value.shape(), s.shape(), "snapshot shape mismatch");
            p.value = s.clone();
        }
    }
}
