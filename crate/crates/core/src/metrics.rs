//! Evaluation metrics: W-Error, spectral energy, stealthiness, overhead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};

pub use crate::linalg::relative_fro_error;

/// Named `(ground truth, estimate)` pairs, one per layer.
#[derive(Debug, Clone)]
pub struct LayerSet {
    layers: Vec<(String, Matrix, Matrix)>,
}

impl LayerSet {
    pub fn new(layers: Vec<(String, Matrix, Matrix)>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("layer set is empty".into()));
        }
        for (name, truth, est) in &layers {
            if truth.shape() != est.shape() {
                return Err(Error::InvalidArgument(format!(
                    "layer {name}: truth {:?} vs estimate {:?}",
                    truth.shape(),
                    est.shape()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn single(truth: Matrix, est: Matrix) -> Result<Self> {
        Self::new(vec![("layer".to_string(), truth, est)])
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix, &Matrix)> {
        self.layers.iter().map(|(n, t, e)| (n.as_str(), t, e))
    }
}

/// `log₁₀(‖est − truth‖_F² / (m·n))`. Exact recovery gives `-inf`.
pub fn layer_log_mse(truth: &Matrix, est: &Matrix) -> Result<f64> {
    let diff = est.sub(truth)?;
    let count = (truth.rows() * truth.cols()) as f64;
    Ok((diff.frobenius_norm_sq() / count).log10())
}

/// Mean over layers of the per-layer log₁₀ MSE. Higher means the estimate is
/// further from the truth. Any exactly-recovered layer makes the result
/// `f64::NEG_INFINITY`.
pub fn w_error(layers: &LayerSet) -> f64 {
    let total: f64 = layers
        .iter()
        .map(|(_, t, e)| layer_log_mse(t, e).expect("shapes checked by LayerSet"))
        .sum();
    total / layers.len() as f64
}

/// Renders a W-Error value, with `-inf` for the exact-recovery sentinel.
pub fn format_w_error(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Fraction of spectral energy held by the top `delta_r` singular values.
/// Zero matrices report 0.
pub fn removed_energy_ratio(w: &Matrix, delta_r: usize) -> Result<f64> {
    let max = w.rows().min(w.cols());
    if delta_r > max {
        return Err(Error::InvalidArgument(format!(
            "delta_r={delta_r} exceeds min dimension {max}"
        )));
    }
    let s = svd(w)?.s;
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let top: f64 = s[..delta_r].iter().map(|v| v * v).sum();
    Ok(top / total)
}

/// Relative off-diagonal Frobenius mass of the Gram matrix `BᵀB`.
///
/// Zero exactly when the columns of `B` are mutually orthogonal, which is the
/// fingerprint SVD-derived factors carry. Zero matrices report 0.
pub fn gram_offdiag_mass(b: &Matrix) -> f64 {
    let g = b.transpose().matmul(b).expect("Bᵀ·B always conforms");
    let total = g.frobenius_norm();
    if total == 0.0 {
        return 0.0;
    }
    let k = g.rows();
    let off: f64 = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| g.get(i, j).powi(2))
        .sum();
    off.sqrt() / total
}

/// Analytic parameter and FLOP overhead of carrying `Δr` extra adapter rank.
///
/// FLOPs count a multiply-add as two operations, per input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub base_params: u64,
    pub adapter_params: u64,
    pub added_params: u64,
    pub base_flops_per_token: u64,
    pub added_flops: u64,
    pub params_pct: f64,
    pub flops_pct: f64,
}

/// Overhead for layers of the given `(m, n)` shapes with adapter rank `r`
/// widened by `delta_r`. Each layer adds `(m + n)·Δr` key parameters and
/// `2·(m + n)·Δr` FLOPs against a base of `m·n` parameters and `2·m·n` FLOPs.
pub fn overhead_report(layer_dims: &[(usize, usize)], r: usize, delta_r: usize) -> OverheadReport {
    let mut base_params = 0u64;
    let mut adapter_params = 0u64;
    let mut added_params = 0u64;
    for &(m, n) in layer_dims {
        let (m, n) = (m as u64, n as u64);
        base_params += m * n;
        adapter_params += (m + n) * r as u64;
        added_params += (m + n) * delta_r as u64;
    }
    let base_flops_per_token = 2 * base_params;
    let added_flops = 2 * added_params;
    let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    OverheadReport {
        base_params,
        adapter_params,
        added_params,
        base_flops_per_token,
        added_flops,
        params_pct: pct(added_params, base_params),
        flops_pct: pct(added_flops, base_flops_per_token),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, random_orthogonal, Seed};

    #[test]
    fn w_error_single_entry_difference() {
        let truth = Matrix::zeros(2, 2);
        let est = Matrix::from_rows(&[&[0.1, 0.0], &[0.0, 0.0]]);
        let v = w_error(&LayerSet::single(truth, est).unwrap());
        // log10(0.01 / 4)
        assert!((v - (-2.602059991327962)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn w_error_exact_recovery_is_negative_infinity() {
        let w = Matrix::identity(3);
        let v = w_error(&LayerSet::single(w.clone(), w).unwrap());
        assert_eq!(v, f64::NEG_INFINITY);
        assert_eq!(format_w_error(v), "-inf");
    }

    #[test]
    fn w_error_averages_layers() {
        // per-element MSE 1e-2 and 1e-4
        let a = Matrix::zeros(1, 1);
        let set = LayerSet::new(vec![
            ("a".into(), a.clone(), Matrix::from_rows(&[&[0.1]])),
            ("b".into(), a.clone(), Matrix::from_rows(&[&[0.01]])),
        ])
        .unwrap();
        assert!((w_error(&set) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn layer_set_validation() {
        assert!(LayerSet::new(vec![]).is_err());
        assert!(LayerSet::single(Matrix::zeros(2, 2), Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn energy_ratio_cases() {
        let d = Matrix::from_diag(&[3.0, 2.0, 1.0]);
        assert!((removed_energy_ratio(&d, 1).unwrap() - 9.0 / 14.0).abs() < 1e-15);
        assert!((removed_energy_ratio(&d, 3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(removed_energy_ratio(&Matrix::zeros(3, 2), 1).unwrap(), 0.0);
        assert!(removed_energy_ratio(&d, 4).is_err());
    }

    #[test]
    fn relative_error_cases() {
        let i = Matrix::identity(2);
        assert_eq!(relative_fro_error(&i, &i).unwrap(), 0.0);
        assert!((relative_fro_error(&i.scale(2.0), &i).unwrap() - 1.0).abs() < 1e-15);
        assert!(relative_fro_error(&i, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn gram_mass_cases() {
        assert!(gram_offdiag_mass(&random_orthogonal(5, Seed(1))) < 1e-12);
        let b = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let expected = 2f64.sqrt() / 7f64.sqrt();
        assert!((gram_offdiag_mass(&b) - expected).abs() < 1e-15);
        assert_eq!(gram_offdiag_mass(&Matrix::zeros(3, 2)), 0.0);
        let g = gaussian_matrix(30, 4, 1.0, &mut Seed(3).rng());
        assert!(gram_offdiag_mass(&g) > 1e-3);
    }

    #[test]
    fn overhead_single_square_layer() {
        let rep = overhead_report(&[(100, 100)], 8, 4);
        assert_eq!(rep.base_params, 10_000);
        assert_eq!(rep.added_params, 800);
        assert_eq!(rep.adapter_params, 1_600);
        assert_eq!(rep.base_flops_per_token, 20_000);
        assert_eq!(rep.added_flops, 1_600);
        assert!((rep.params_pct - 8.0).abs() < 1e-12);
        assert!((rep.flops_pct - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_delta_has_no_overhead() {
        let rep = overhead_report(&[(64, 32), (10, 20)], 4, 0);
        assert_eq!((rep.added_params, rep.added_flops), (0, 0));
        assert_eq!(rep.params_pct, 0.0);
        assert_eq!(overhead_report(&[], 4, 4).params_pct, 0.0);
    }
}
