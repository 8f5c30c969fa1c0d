//! Sparse reconstruction weights over graph in-neighbors.
//!
//! Each row `w_i` minimizes `‖x_i − Σ_j w_ij x_j‖²` over the standard simplex
//! restricted to the in-neighbors of `i`.
//!
//! With offsets `g_j = x_j − x_i`, the problem is the distance from the
//! origin to the convex hull of the `g_j`. Lawson–Hanson NNLS on
//! `[G; c·1ᵀ] u ≈ [0; c]` followed by `w = u / Σu` yields that projection
//! exactly: the NNLS optimality conditions reduce to `g_jᵀp ≥ ‖p‖²` for all
//! `j`, with equality on the support, where `p = G w`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};

use crate::error::{LsiError, Result};
use crate::geometry::DomainMatrix;
use crate::graph::NeighborGraph;
use crate::nnls::nnls;
use crate::par;

/// Row-stochastic sparse matrix; row `i` holds `(j, w_ij)` sorted by `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    /// Validates non-negativity, unit row sums (within 1e-12), sorted unique
    /// column indices and an empty diagonal.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            let mut prev = None;
            for &(j, w) in row {
                if j >= n {
                    return Err(LsiError::IndexOutOfRange { index: j, len: n });
                }
                if j == i {
                    return Err(LsiError::invalid(format!("row {i}: weight on the diagonal")));
                }
                if prev.is_some_and(|p| p >= j) {
                    return Err(LsiError::invalid(format!("row {i}: unsorted or repeated column {j}")));
                }
                if !w.is_finite() || w < 0.0 {
                    return Err(LsiError::invalid(format!("row {i}: bad weight {w} at column {j}")));
                }
                prev = Some(j);
            }
            let sum: f64 = row.iter().map(|e| e.1).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(LsiError::invalid(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { rows })
    }

    /// No validation; the anchor-fixed matrix carries identity rows.
    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<(usize, f64)>>) -> Self {
        Self { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0.0, |k| self.rows[i][k].1)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|e| e.1).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// Columns with no positive entry. Such a vertex influences nobody.
    pub fn empty_columns(&self) -> Vec<usize> {
        let mut used = vec![false; self.n()];
        for row in &self.rows {
            for &(j, w) in row {
                if w > 0.0 {
                    used[j] = true;
                }
            }
        }
        (0..self.n()).filter(|&j| !used[j]).collect()
    }

    /// Coordinate-format dump: one `i j w_ij` line per stored entry,
    /// row-major, 17 significant digits.
    pub fn write_coo(&self, mut out: impl Write) -> std::io::Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                writeln!(out, "{i} {j} {w:.16e}")?;
            }
        }
        Ok(())
    }
}

/// Simplex weights reconstructing `x` from the rows of `neighbors` (`k x d`).
///
/// If every neighbor coincides with `x`, or the non-negative solve returns
/// all zeros, the weights are uniform `1/k`.
pub fn solve_row_weights(x: ArrayView1<'_, f64>, neighbors: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let (k, d) = neighbors.dim();
    if k == 0 {
        return Err(LsiError::invalid("no neighbors to reconstruct from"));
    }
    if x.len() != d {
        return Err(LsiError::invalid(format!(
            "point has dimension {}, neighbors have {d}",
            x.len()
        )));
    }
    if x.iter().chain(neighbors.iter()).any(|v| !v.is_finite()) {
        return Err(LsiError::invalid("non-finite coordinate"));
    }

    // Column j is the offset x_j − x; for simplex weights the residual
    // x − Σ w_j x_j equals −Σ w_j (x_j − x).
    let mut scale = 0.0f64;
    let mut a = DMatrix::<f64>::zeros(d + 1, k);
    for j in 0..k {
        let mut norm2 = 0.0;
        for c in 0..d {
            let v = neighbors[[j, c]] - x[c];
            a[(c, j)] = v;
            norm2 += v * v;
        }
        scale = scale.max(norm2.sqrt());
    }
    if scale == 0.0 {
        return Ok(vec![1.0 / k as f64; k]);
    }
    // Any positive weight on the ones row gives the same normalized answer;
    // matching the offset scale keeps the system well conditioned.
    for j in 0..k {
        a[(d, j)] = scale;
    }
    let mut b = DVector::<f64>::zeros(d + 1);
    b[d] = scale;

    let mut w = nnls(&a, &b).x;
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        w = vec![1.0 / k as f64; k];
    }
    Ok(w)
}

/// Solves every row of the weight matrix over the in-neighbors of `g`.
/// Zero weights are not stored.
pub fn assemble_weight_matrix(g: &NeighborGraph, x: &DomainMatrix) -> Result<WeightMatrix> {
    if g.n() != x.n() {
        return Err(LsiError::invalid(format!(
            "graph has {} vertices, domain matrix {} rows",
            g.n(),
            x.n()
        )));
    }
    let data = x.data();
    let rows = par::map_range(g.n(), |i| -> Result<Vec<(usize, f64)>> {
        let nbrs = g.in_neighbors(i)?;
        let sub = data.select(ndarray::Axis(0), &nbrs);
        let w = solve_row_weights(data.row(i), sub.view())
            .map_err(|e| LsiError::Row { row: i, source: Box::new(e) })?;
        let mut row: Vec<(usize, f64)> = nbrs.into_iter().zip(w).filter(|e| e.1 > 0.0).collect();
        let sum: f64 = row.iter().map(|e| e.1).sum();
        row.iter_mut().for_each(|e| e.1 /= sum);
        Ok(row)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(WeightMatrix { rows })
}
