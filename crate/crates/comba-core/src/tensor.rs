//! Minimal dense tensor math in double precision.
//!
//! Row-major storage, explicit shapes, no broadcasting magic. These kernels
//! are the shared forward primitives; the autodiff layer wraps them and adds
//! the backward rules.

use crate::error::{Error, Result};
use crate::rng::RngState;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// 2-D constructor from nested rows; rows must be equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Tensor {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor {
            shape: vec![r, c],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() on non-2D tensor");
        self.shape[0]
    }

    /// Column count of a 2-D tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() on non-2D tensor");
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.shape[1];
        self.data[i * c + j] = v;
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill_uniform(&mut self, rng: &mut RngState, lo: f64, hi: f64) {
        for v in &mut self.data {
            *v = rng.uniform(lo, hi);
        }
    }

    pub fn fill_normal(&mut self, rng: &mut RngState, std: f64) {
        for v in &mut self.data {
            *v = std * rng.normal();
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| c * v)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `self (r×k) · other (k×c)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (r, k) = (self.rows(), self.cols());
        let (k2, c) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dims {}x{} . {}x{}",
                r, k, k2, c
            )));
        }
        let mut out = Tensor::zeros(&[r, c]);
        for i in 0..r {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out.data[i * c..(i + 1) * c];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * c..(p + 1) * c];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ (k×r)ᵀ · other` — i.e. self is (r×k), result (k×c).
    pub fn matmul_tn(&self, other: &Tensor) -> Tensor {
        let (r, k) = (self.rows(), self.cols());
        let (r2, c) = (other.rows(), other.cols());
        assert_eq!(r, r2, "matmul_tn row mismatch");
        let mut out = Tensor::zeros(&[k, c]);
        for i in 0..r {
            let a_row = &self.data[i * k..(i + 1) * k];
            let b_row = &other.data[i * c..(i + 1) * c];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[p * c..(p + 1) * c];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self (r×k) · otherᵀ (c×k)ᵀ`, result (r×c).
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        let (r, k) = (self.rows(), self.cols());
        let (c, k2) = (other.rows(), other.cols());
        assert_eq!(k, k2, "matmul_nt inner mismatch");
        let mut out = Tensor::zeros(&[r, c]);
        for i in 0..r {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out.data[i * c..(i + 1) * c];
            for (j, o) in o_row.iter_mut().enumerate() {
                let b_row = &other.data[j * k..(j + 1) * k];
                *o = a_row.iter().zip(b_row).map(|(&a, &b)| a * b).sum();
            }
        }
        out
    }

    /// Rows of `self` selected by `idx` (2-D).
    pub fn gather_rows(&self, idx: &[u32]) -> Tensor {
        let c = self.cols();
        let mut out = Tensor::zeros(&[idx.len(), c]);
        for (o, &i) in idx.iter().enumerate() {
            out.data[o * c..(o + 1) * c].copy_from_slice(self.row(i as usize));
        }
        out
    }

    /// Copy of `self` with `rows[p]` written at row `idx[p]`.
    pub fn scatter_rows(&self, rows: &Tensor, idx: &[u32]) -> Tensor {
        let c = self.cols();
        assert_eq!(rows.cols(), c, "scatter_rows col mismatch");
        assert_eq!(rows.rows(), idx.len(), "scatter_rows count mismatch");
        let mut out = self.clone();
        for (p, &i) in idx.iter().enumerate() {
            out.data[i as usize * c..(i as usize + 1) * c].copy_from_slice(rows.row(p));
        }
        out
    }

    /// Horizontal concatenation of 2-D tensors with equal row counts.
    pub fn concat_cols(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty());
        let r = parts[0].rows();
        let total: usize = parts.iter().map(|t| t.cols()).sum();
        let mut out = Tensor::zeros(&[r, total]);
        for i in 0..r {
            let mut off = 0;
            for t in parts {
                assert_eq!(t.rows(), r, "concat_cols row mismatch");
                let c = t.cols();
                out.data[i * total + off..i * total + off + c].copy_from_slice(t.row(i));
                off += c;
            }
        }
        out
    }

    /// Columns `[start, start+len)` of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        assert!(start + len <= c, "slice_cols out of range");
        let mut out = Tensor::zeros(&[r, len]);
        for i in 0..r {
            out.data[i * len..(i + 1) * len]
                .copy_from_slice(&self.data[i * c + start..i * c + start + len]);
        }
        out
    }

    /// Each column repeated `r` times in place: out[:, j*r + s] = self[:, j].
    pub fn repeat_cols(&self, r: usize) -> Tensor {
        let (n, c) = (self.rows(), self.cols());
        let mut out = Tensor::zeros(&[n, c * r]);
        for i in 0..n {
            for j in 0..c {
                let v = self.at(i, j);
                for s in 0..r {
                    out.data[i * c * r + j * r + s] = v;
                }
            }
        }
        out
    }

    /// Inverse accumulation of [`Tensor::repeat_cols`]: sums groups of `r`
    /// adjacent columns.
    pub fn sum_col_groups(&self, r: usize) -> Tensor {
        let (n, cr) = (self.rows(), self.cols());
        assert_eq!(cr % r, 0, "sum_col_groups width not divisible");
        let c = cr / r;
        let mut out = Tensor::zeros(&[n, c]);
        for i in 0..n {
            for j in 0..c {
                let mut acc = 0.0;
                for s in 0..r {
                    acc += self.data[i * cr + j * r + s];
                }
                out.data[i * c + j] = acc;
            }
        }
        out
    }

    /// Sum over rows, returning a length-`cols` 1-D tensor.
    pub fn col_sum(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = Tensor::zeros(&[c]);
        for i in 0..r {
            for j in 0..c {
                out.data[j] += self.data[i * c + j];
            }
        }
        out
    }

    /// `self + bias` with `bias` broadcast over rows.
    pub fn add_bias(&self, bias: &Tensor) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        assert_eq!(bias.numel(), c, "add_bias width mismatch");
        let mut out = self.clone();
        for i in 0..r {
            for j in 0..c {
                out.data[i * c + j] += bias.data[j];
            }
        }
        out
    }

    pub fn relu(&self) -> Tensor {
        self.map(|v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn softplus(&self) -> Tensor {
        self.map(softplus)
    }

    pub fn exp(&self) -> Tensor {
        self.map(f64::exp)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Overflow-safe ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of softplus.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// (e^u - 1) / u, continuous through u = 0.
pub fn expm1_over_x(u: f64) -> f64 {
    if u.abs() < 1e-5 {
        1.0 + u / 2.0 + u * u / 6.0
    } else {
        u.exp_m1() / u
    }
}

/// Derivative of [`expm1_over_x`].
pub fn expm1_over_x_deriv(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        0.5 + u / 3.0 + u * u / 8.0
    } else {
        (u.exp() * (u - 1.0) + 1.0) / (u * u)
    }
}

/// Per-row layer normalization over the last axis of a 2-D tensor.
/// Returns (output, normalized-no-affine, inverse std) so the backward pass
/// can reuse the intermediates.
pub fn layer_norm_forward(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    eps: f64,
) -> (Tensor, Tensor, Vec<f64>) {
    let (r, c) = (x.rows(), x.cols());
    assert_eq!(gain.numel(), c, "layer_norm gain width");
    assert_eq!(bias.numel(), c, "layer_norm bias width");
    let mut out = Tensor::zeros(&[r, c]);
    let mut xhat = Tensor::zeros(&[r, c]);
    let mut inv_std = vec![0.0; r];
    for (i, slot) in inv_std.iter_mut().enumerate() {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let istd = 1.0 / (var + eps).sqrt();
        *slot = istd;
        for (j, &xv) in row.iter().enumerate() {
            let h = (xv - mean) * istd;
            xhat.data[i * c + j] = h;
            out.data[i * c + j] = gain.data()[j] * h + bias.data()[j];
        }
    }
    (out, xhat, inv_std)
}

/// Backward of layer-norm; returns (dx, dgain, dbias).
pub fn layer_norm_backward(
    grad: &Tensor,
    xhat: &Tensor,
    inv_std: &[f64],
    gain: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (r, c) = (grad.rows(), grad.cols());
    let mut dx = Tensor::zeros(&[r, c]);
    let mut dgain = Tensor::zeros(&[c]);
    let mut dbias = Tensor::zeros(&[c]);
    for (i, &istd) in inv_std.iter().enumerate() {
        let g = grad.row(i);
        let h = xhat.row(i);
        let mut sum_gh = 0.0; // Σ (g·γ)
        let mut sum_ghh = 0.0; // Σ (g·γ)·x̂
        for j in 0..c {
            let gg = g[j] * gain.data()[j];
            sum_gh += gg;
            sum_ghh += gg * h[j];
            dgain.data_mut()[j] += g[j] * h[j];
            dbias.data_mut()[j] += g[j];
        }
        let m = c as f64;
        for j in 0..c {
            let gg = g[j] * gain.data()[j];
            dx.data_mut()[i * c + j] = istd * (gg - sum_gh / m - h[j] * sum_ghh / m);
        }
    }
    (dx, dgain, dbias)
}
