//! Pattern-only sparse matrices in CSR form.
//!
//! Hop adjacencies are 0/1 matrices, so we store structure only and apply
//! any scaling (mean vs. sum aggregation) during the multiply.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// How a sparse-times-dense product weights each neighbor row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpmmMode {
    /// Each present entry contributes with weight 1/row_degree (mean).
    #[serde(rename = "row")]
    RowNormalized,
    /// Each present entry contributes with weight 1 (sum).
    #[serde(rename = "raw")]
    Raw,
}

/// Square 0/1 sparse matrix, rows sorted, CSR layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

impl CsrMatrix {
    /// Build from per-row column lists. Columns within a row are sorted and
    /// deduplicated.
    pub fn from_rows(n: usize, rows: Vec<Vec<u32>>) -> CsrMatrix {
        assert_eq!(rows.len(), n, "row count mismatch");
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut cols in rows {
            cols.sort_unstable();
            cols.dedup();
            if let Some(&last) = cols.last() {
                assert!((last as usize) < n, "column out of range");
            }
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
        }
    }

    /// Build from an undirected edge list (both directions inserted).
    pub fn from_undirected_edges(n: usize, edges: &[(u32, u32)]) -> CsrMatrix {
        let mut rows = vec![Vec::new(); n];
        for &(u, v) in edges {
            rows[u as usize].push(v);
            rows[v as usize].push(u);
        }
        CsrMatrix::from_rows(n, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&(j as u32)).is_ok()
    }

    /// All stored (row, col) pairs in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).iter().map(move |&j| (i as u32, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries()
            .all(|(i, j)| self.has_edge(j as usize, i as usize))
    }

    /// Effective coefficient of entry (i, ·) under `mode`.
    pub fn row_coeff(&self, i: usize, mode: SpmmMode) -> f64 {
        match mode {
            SpmmMode::RowNormalized => {
                let d = self.degree(i);
                if d == 0 {
                    0.0
                } else {
                    1.0 / d as f64
                }
            }
            SpmmMode::Raw => 1.0,
        }
    }

    /// `self · x` where each kept entry is weighted per `mode`. Zero-degree
    /// rows produce zero rows.
    pub fn spmm(&self, x: &Tensor, mode: SpmmMode) -> Tensor {
        assert_eq!(x.rows(), self.n, "spmm row mismatch");
        let c = x.cols();
        let mut out = Tensor::zeros(&[self.n, c]);
        for i in 0..self.n {
            let w = self.row_coeff(i, mode);
            if w == 0.0 {
                continue;
            }
            for &j in self.row(i) {
                let src = x.row(j as usize);
                let dst = out.row_mut(i);
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// `selfᵀ_w · g` using the *same* per-row weights as [`CsrMatrix::spmm`]:
    /// out[j] += w(i) · g[i] for each stored (i, j). This is the adjoint of
    /// `spmm` and serves as its backward kernel.
    pub fn spmm_adjoint(&self, g: &Tensor, mode: SpmmMode) -> Tensor {
        assert_eq!(g.rows(), self.n, "spmm_adjoint row mismatch");
        let c = g.cols();
        let mut out = Tensor::zeros(&[self.n, c]);
        for i in 0..self.n {
            let w = self.row_coeff(i, mode);
            if w == 0.0 {
                continue;
            }
            for &j in self.row(i) {
                let dst = out.row_mut(j as usize);
                let src = g.row(i);
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    /// Dense 0/1 image of the pattern, mainly for tests.
    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(&[self.n, self.n]);
        for (i, j) in self.entries() {
            out.set(i as usize, j as usize, 1.0);
        }
        out
    }
}
