//! Finite-difference verification of analytic gradients.

use crate::autodiff::param::{ParamId, ParamSet};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// Compare analytic gradients against central finite differences of `eval`.
///
/// `analytic` pairs each parameter with its full gradient tensor (typically
/// from one backward pass at the current values). For every parameter, up to
/// `per_param` coordinates are sampled with `rng`; each is nudged ±h with
/// everything else held fixed. Relative error per coordinate is
/// |fd − an| / (|fd| + |an| + 1e-8). `eval` must be a deterministic function
/// of the parameter values (fix any dropout masks via a constant seed).
pub fn grad_check<F>(
    params: &mut ParamSet,
    analytic: &[(ParamId, Tensor)],
    h: f64,
    per_param: usize,
    rng: &mut RngState,
    mut eval: F,
) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut max_rel_error: f64 = 0.0;
    let mut coords_checked = 0;
    for (id, grad) in analytic {
        let numel = grad.numel();
        assert_eq!(
            numel,
            params.value(*id).numel(),
            "analytic gradient shape mismatch for {}",
            params.param(*id).name
        );
        let coords: Vec<usize> = if numel <= per_param {
            (0..numel).collect()
        } else {
            // partial Fisher–Yates for a distinct sample
            let mut pool: Vec<usize> = (0..numel).collect();
            for i in 0..per_param {
                let j = i + rng.below(numel - i);
                pool.swap(i, j);
            }
            pool.truncate(per_param);
            pool
        };
        for c in coords {
            let original = params.value(*id).data()[c];
            params.param_mut(*id).value.data_mut()[c] = original + h;
            let plus = eval(params);
            params.param_mut(*id).value.data_mut()[c] = original - h;
            let minus = eval(params);
            params.param_mut(*id).value.data_mut()[c] = original;
            let fd = (plus - minus) / (2.0 * h);
            let an = grad.data()[c];
            let rel = (fd - an).abs() / (fd.abs() + an.abs() + 1e-8);
            if rel > max_rel_error {
                max_rel_error = rel;
            }
            coords_checked += 1;
        }
    }
    GradCheckReport {
        max_rel_error,
        coords_checked,
    }
}
