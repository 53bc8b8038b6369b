//! Adam with bias correction and decoupled weight decay.

use crate::autodiff::param::ParamSet;

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64, weight_decay: f64) -> AdamHyper {
        AdamHyper {
            lr,
            weight_decay,
            ..AdamHyper::default()
        }
    }
}

impl Default for AdamHyper {
    fn default() -> AdamHyper {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// One update over every parameter from its accumulated gradient. Weight
/// decay is decoupled: it shrinks the value directly instead of entering the
/// moment estimates.
pub fn adam_step(params: &mut ParamSet, h: &AdamHyper) {
    for p in params.iter_mut() {
        p.step += 1;
        let c1 = 1.0 - h.beta1.powi(p.step as i32);
        let c2 = 1.0 - h.beta2.powi(p.step as i32);
        let n = p.value.numel();
        for i in 0..n {
            let g = p.grad.data()[i];
            let m = h.beta1 * p.m.data()[i] + (1.0 - h.beta1) * g;
            let v = h.beta2 * p.v.data()[i] + (1.0 - h.beta2) * g * g;
            p.m.data_mut()[i] = m;
            p.v.data_mut()[i] = v;
            let mhat = m / c1;
            let vhat = v / c2;
            let old = p.value.data()[i];
            p.value.data_mut()[i] =
                old - h.lr * (mhat / (vhat.sqrt() + h.eps) + h.weight_decay * old);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_grad_zero_decay_leaves_values() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::from_rows(&[vec![1.5, -2.0]]));
        let before = ps.value(id).clone();
        adam_step(&mut ps, &AdamHyper::default());
        assert_eq!(ps.value(id), &before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::from_rows(&[vec![0.0, 0.0]]));
        ps.param_mut(id).grad = Tensor::from_rows(&[vec![3.0, -0.25]]);
        let h = AdamHyper {
            lr: 0.01,
            ..AdamHyper::default()
        };
        adam_step(&mut ps, &h);
        // bias correction makes step 1 ≈ −lr · sign(g) for any grad scale
        let v = ps.value(id).data();
        assert!((v[0] + 0.01).abs() < 1e-6, "{}", v[0]);
        assert!((v[1] - 0.01).abs() < 1e-6, "{}", v[1]);
    }

    #[test]
    fn identical_states_step_identically() {
        let run = || {
            let mut ps = ParamSet::new();
            let id = ps.add("w", Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]));
            let h = AdamHyper::with_lr(0.05, 0.01);
            for step in 0..5 {
                ps.param_mut(id).grad = Tensor::from_rows(&[vec![0.3 * step as f64, -1.0, 0.5]]);
                adam_step(&mut ps, &h);
            }
            ps.value(id).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn decay_shrinks_without_gradient() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::from_rows(&[vec![10.0]]));
        let h = AdamHyper {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamHyper::default()
        };
        adam_step(&mut ps, &h);
        // pure decay path: 10 − 0.1·0.5·10 = 9.5
        assert!((ps.value(id).data()[0] - 9.5).abs() < 1e-12);
    }
}
