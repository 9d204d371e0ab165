//! Deterministic dense linear algebra in `f64`.

mod matrix;
mod random;
mod svd;

pub use matrix::Matrix;
pub use random::{gaussian_matrix, random_orthogonal, random_orthonormal_columns, Seed};
pub use svd::{low_rank_approx, svd, tsvd, SvdFactors};

use crate::error::Result;

/// `‖a − b‖_F / max(‖b‖_F, 1e-300)`.
pub fn relative_fro_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    let diff = a.sub(b)?.frobenius_norm();
    Ok(diff / b.frobenius_norm().max(1e-300))
}
