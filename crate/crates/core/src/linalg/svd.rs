//! Thin singular value decomposition with a canonical sign convention.
//!
//! The decomposition itself is LAPACK's `dgesvd` (via `ndarray-linalg`); this
//! module owns ordering, the sign convention and truncation, which is what the
//! rest of the crate relies on for reproducible factors.

use ndarray_linalg::SVD;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Thin SVD `X = U · diag(S) · Vᵀ` with `k` retained components.
///
/// Invariants: `S` is non-increasing and non-negative; columns of `U` and `V`
/// are orthonormal; in every column of `U` the entry of largest magnitude
/// (lowest row on ties) is non-negative, and the paired `V` column is flipped
/// with it.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U · diag(S) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let us = self.u.scale_columns(&self.s).expect("factor shapes agree");
        us.matmul(&self.v.transpose()).expect("factor shapes agree")
    }

    /// `U · diag(√S)` — the left half of a symmetric split.
    pub fn left_sqrt_factor(&self) -> Matrix {
        let roots: Vec<f64> = self.s.iter().map(|s| s.sqrt()).collect();
        self.u.scale_columns(&roots).expect("factor shapes agree")
    }

    /// `diag(√S) · Vᵀ` — the right half of a symmetric split.
    pub fn right_sqrt_factor(&self) -> Matrix {
        let roots: Vec<f64> = self.s.iter().map(|s| s.sqrt()).collect();
        self.v.transpose().scale_rows(&roots).expect("factor shapes agree")
    }

    /// Leading `k` components.
    pub fn truncate(&self, k: usize) -> Result<SvdFactors> {
        if k == 0 || k > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "truncation rank {k} outside 1..={}",
                self.rank()
            )));
        }
        Ok(SvdFactors {
            u: self.u.leading_cols(k)?,
            s: self.s[..k].to_vec(),
            v: self.v.leading_cols(k)?,
        })
    }
}

/// Full thin SVD, `k = min(rows, cols)`.
pub fn svd(x: &Matrix) -> Result<SvdFactors> {
    let (m, n) = x.shape();
    let k = m.min(n);
    let (u_full, values, vt_full) = x
        .to_ndarray()
        .svd(true, true)
        .map_err(|e| Error::Numerical(format!("SVD of {m}x{n} matrix failed: {e}")))?;
    let u_na = u_full.expect("requested U");
    let vt_na = vt_full.expect("requested Vᵀ");

    // Stable descending order; ties keep the solver's order.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));

    let mut u = Matrix::zeros(m, k);
    let mut v = Matrix::zeros(n, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = values[src];
        // LAPACK reports non-negative values; guard the sign anyway so the
        // product is preserved if that ever changes.
        let flip_v = if sigma < 0.0 { -1.0 } else { 1.0 };
        s.push(sigma.abs());

        let mut pivot = 0usize;
        let mut best = -1.0f64;
        for i in 0..m {
            let a = u_na[(i, src)].abs();
            if a > best {
                best = a;
                pivot = i;
            }
        }
        let sign = if u_na[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            u.set(i, dst, sign * u_na[(i, src)]);
        }
        for j in 0..n {
            v.set(j, dst, sign * flip_v * vt_na[(src, j)]);
        }
    }
    Ok(SvdFactors { u, s, v })
}

/// Rank-`k` truncated SVD: the leading `k` components of [`svd`].
pub fn tsvd(x: &Matrix, k: usize) -> Result<SvdFactors> {
    let max_k = x.rows().min(x.cols());
    if k == 0 || k > max_k {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {k} outside 1..={max_k} for a {}x{} matrix",
            x.rows(),
            x.cols()
        )));
    }
    svd(x)?.truncate(k)
}

/// Best rank-`k` approximation of `x`, materialized.
pub fn low_rank_approx(x: &Matrix, k: usize) -> Result<Matrix> {
    Ok(tsvd(x, k)?.reconstruct())
}
