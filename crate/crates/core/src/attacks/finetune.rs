//! Fine-tuning recovery against a linear stand-in model.
//!
//! The attacker holds `W̃` and input/output pairs `(x, W·x)` and runs gradient
//! descent on
//!
//! ```text
//! (1/N) Σ ‖Ŵx_i − y_i‖² + ridge · ‖Ŵ − W̃‖_F²
//! ```
//!
//! starting from `Ŵ = W̃`. Unlike a deep network, a linear map is fully
//! identified once the samples span the input space, so with `N ≥ n` this
//! attack recovers `W` outright.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, svd, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub ridge: f64,
}

/// `count` samples with standard Gaussian inputs and `y = W·x`.
pub fn make_samples<R: Rng + ?Sized>(w: &Matrix, count: usize, rng: &mut R) -> Vec<Sample> {
    if count == 0 {
        return Vec::new();
    }
    let xs = gaussian_matrix(count, w.cols(), 1.0, rng);
    (0..count)
        .map(|i| {
            let x = xs.row(i).to_vec();
            let y = w.matvec(&x).expect("sample width matches");
            Sample { x, y }
        })
        .collect()
}

/// Sufficient statistics `C = XXᵀ/N` (n×n) and `D = YXᵀ/N` (m×n).
fn moments(w_trunc: &Matrix, samples: &[Sample]) -> Result<Option<(Matrix, Matrix)>> {
    let (m, n) = w_trunc.shape();
    if samples.is_empty() {
        return Ok(None);
    }
    for (i, s) in samples.iter().enumerate() {
        if s.x.len() != n || s.y.len() != m {
            return Err(Error::InvalidArgument(format!(
                "sample {i} has x/y lengths {}/{}, expected {n}/{m}",
                s.x.len(),
                s.y.len()
            )));
        }
    }
    let inv_n = 1.0 / samples.len() as f64;
    let c = Matrix::from_fn(n, n, |i, j| {
        samples.iter().map(|s| s.x[i] * s.x[j]).sum::<f64>() * inv_n
    });
    let d = Matrix::from_fn(m, n, |i, j| {
        samples.iter().map(|s| s.y[i] * s.x[j]).sum::<f64>() * inv_n
    });
    Ok(Some((c, d)))
}

/// Step size `1 / (2·(λ_max(C) + ridge))`, safely inside the stability bound.
pub fn suggested_learning_rate(samples: &[Sample], ridge: f64) -> Result<f64> {
    let Some(first) = samples.first() else {
        return Ok(1.0);
    };
    let n = first.x.len();
    let probe = Matrix::zeros(first.y.len(), n);
    let (c, _) = moments(&probe, samples)?.expect("non-empty");
    let lambda_max = svd(&c)?.s[0];
    Ok(1.0 / (2.0 * (lambda_max + ridge).max(f64::MIN_POSITIVE)))
}

/// Gradient descent from `W̃`. `steps = 0` or no samples with zero ridge
/// returns `W̃` bit-exactly.
pub fn finetune_recovery(w_trunc: &Matrix, samples: &[Sample], cfg: &FinetuneConfig) -> Result<Matrix> {
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    if !(cfg.ridge >= 0.0 && cfg.ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge must be non-negative, got {}",
            cfg.ridge
        )));
    }
    let stats = moments(w_trunc, samples)?;
    let mut w_hat = w_trunc.clone();
    let Some((c, d)) = stats else {
        // Only the ridge term remains, and its gradient vanishes at W̃.
        return Ok(w_hat);
    };
    for step in 0..cfg.steps {
        // ∇ = 2(ŴC − D) + 2·ridge·(Ŵ − W̃)
        let mut grad = w_hat.matmul(&c)?.sub(&d)?;
        if cfg.ridge > 0.0 {
            grad = grad.add(&w_hat.sub(w_trunc)?.scale(cfg.ridge))?;
        }
        w_hat = w_hat.sub(&grad.scale(2.0 * cfg.learning_rate))?;
        if !w_hat.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("fine-tuning diverged at step {step}")));
        }
    }
    Ok(w_hat)
}

/// Closed-form limit of [`finetune_recovery`]:
/// `W̃ + (D − W̃C)(C + ridge·I)⁺`.
///
/// With `N ≥ n` generic samples and zero ridge this is the ordinary least
/// squares solution and equals `W`.
pub fn least_squares_recovery(w_trunc: &Matrix, samples: &[Sample], ridge: f64) -> Result<Matrix> {
    let Some((c, d)) = moments(w_trunc, samples)? else {
        return Ok(w_trunc.clone());
    };
    let n = c.rows();
    let reg = c.add(&Matrix::identity(n).scale(ridge))?;
    let f = svd(&reg)?;
    let cutoff = f.s[0] * 1e-12;
    let inv_s: Vec<f64> = f.s.iter().map(|&s| if s > cutoff { 1.0 / s } else { 0.0 }).collect();
    let pinv = f.v.scale_columns(&inv_s)?.matmul(&f.u.transpose())?;
    let rhs = d.sub(&w_trunc.matmul(&c)?)?;
    w_trunc.add(&rhs.matmul(&pinv)?)
}
