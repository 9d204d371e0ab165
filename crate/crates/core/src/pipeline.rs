//! Spectral truncation, compensation, adapter encryption, orthogonal
//! reparameterization and authorized restoration.
//!
//! For a layer weight `W` (m×n) and adapters `(B_k, A_k)` of rank `r`:
//!
//! 1. `L = TSVD_Δr(W)` is the spectral key; `W̃ = W − L` is deployed.
//! 2. Each adapter is widened to rank `r + Δr` as `[B | U√Σ]`, `[A ; √Σ Vᵀ]`
//!    so that `B̃Ã = L + BA`.
//! 3. `B̃Ã` is re-factored by SVD. Its leading `Δr` components become the
//!    restoration key `(K_B, K_A)`; the next `r` become the deployed adapter.
//! 4. The deployed adapter is rotated, `(B*M, MᵀA*)`, with a Haar-random `M`.
//!
//! Authorized inference evaluates `W̃x + B'(A'x) + K_B(K_A x)`, which equals
//! `(W + BA)x` up to rounding.

use crate::error::{Error, Result};
use crate::linalg::{random_orthogonal, svd, tsvd, Matrix, Seed, SvdFactors};

/// Truncation rank used when none is configured.
pub const DEFAULT_DELTA_R: usize = 4;

/// Rank-`Δr` factors `(U, Σ, V)` of the withheld component `L`. Never deployed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKey {
    factors: SvdFactors,
}

impl SpectralKey {
    pub(crate) fn from_factors(factors: SvdFactors) -> Self {
        Self { factors }
    }

    pub fn delta_r(&self) -> usize {
        self.factors.rank()
    }

    pub fn factors(&self) -> &SvdFactors {
        &self.factors
    }

    /// `(m, n)` of the matrix the key was extracted from.
    pub fn shape(&self) -> (usize, usize) {
        (self.factors.u.rows(), self.factors.v.rows())
    }

    /// `L = U · Σ · Vᵀ`.
    pub fn product(&self) -> Matrix {
        self.factors.reconstruct()
    }
}

/// A LoRA update `B · A`. Any `α/r` scaling is assumed already folded into `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    b: Matrix,
    a: Matrix,
}

impl LoraAdapter {
    pub fn new(b: Matrix, a: Matrix) -> Result<Self> {
        if b.cols() != a.rows() {
            return Err(Error::DimensionMismatch {
                op: "lora adapter",
                left: b.shape(),
                right: a.shape(),
            });
        }
        Ok(Self { b, a })
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    /// Shape `(m, n)` of the update `B · A`.
    pub fn shape(&self) -> (usize, usize) {
        (self.b.rows(), self.a.cols())
    }

    pub fn product(&self) -> Matrix {
        self.b.matmul(&self.a).expect("validated at construction")
    }

    pub fn into_parts(self) -> (Matrix, Matrix) {
        (self.b, self.a)
    }
}

/// Adapter widened to rank `r + Δr` so that `B̃ · Ã = L + B · A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedAdapter {
    pub b: Matrix,
    pub a: Matrix,
    pub base_rank: usize,
    pub delta_r: usize,
}

impl CompensatedAdapter {
    pub fn product(&self) -> Matrix {
        self.b.matmul(&self.a).expect("compensated factors agree")
    }
}

/// Deployable adapter of the original rank `r`. Its product alone is not the
/// task update; the restoration key term is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedAdapter {
    pub b: Matrix,
    pub a: Matrix,
}

impl EncryptedAdapter {
    pub fn new(b: Matrix, a: Matrix) -> Result<Self> {
        if b.cols() != a.rows() {
            return Err(Error::DimensionMismatch {
                op: "encrypted adapter",
                left: b.shape(),
                right: a.shape(),
            });
        }
        Ok(Self { b, a })
    }

    pub fn rank(&self) -> usize {
        self.b.cols()
    }

    pub fn product(&self) -> Matrix {
        self.b.matmul(&self.a).expect("encrypted factors agree")
    }
}

/// `(K_B, K_A)`, the leading `Δr` components of the compensated adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct RestorationKey {
    pub kb: Matrix,
    pub ka: Matrix,
}

impl RestorationKey {
    pub fn new(kb: Matrix, ka: Matrix) -> Result<Self> {
        if kb.cols() != ka.rows() {
            return Err(Error::DimensionMismatch {
                op: "restoration key",
                left: kb.shape(),
                right: ka.shape(),
            });
        }
        Ok(Self { kb, ka })
    }

    pub fn delta_r(&self) -> usize {
        self.kb.cols()
    }

    pub fn product(&self) -> Matrix {
        self.kb.matmul(&self.ka).expect("key factors agree")
    }
}

/// Output of [`protect_layer`]: the truncated weight plus index-aligned
/// encrypted adapters and restoration keys. The spectral key is not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectedLayer {
    w_trunc: Matrix,
    adapters: Vec<EncryptedAdapter>,
    keys: Vec<RestorationKey>,
    delta_r: usize,
    base_rank: usize,
}

impl ProtectedLayer {
    /// Assembles a layer from parts, checking that every shape is consistent.
    /// `base_rank` is taken from the adapters (0 when there are none).
    pub fn new(
        w_trunc: Matrix,
        adapters: Vec<EncryptedAdapter>,
        keys: Vec<RestorationKey>,
        delta_r: usize,
    ) -> Result<Self> {
        if adapters.len() != keys.len() {
            return Err(Error::InvalidArgument(format!(
                "{} adapters but {} restoration keys",
                adapters.len(),
                keys.len()
            )));
        }
        if delta_r == 0 {
            return Err(Error::InvalidArgument("delta_r must be positive".into()));
        }
        let (m, n) = w_trunc.shape();
        let base_rank = adapters.first().map_or(0, EncryptedAdapter::rank);
        for (k, (enc, key)) in adapters.iter().zip(&keys).enumerate() {
            let ok = enc.b.rows() == m
                && enc.a.cols() == n
                && enc.rank() == base_rank
                && key.kb.rows() == m
                && key.ka.cols() == n
                && key.delta_r() == delta_r;
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "adapter {k} shapes B{:?} A{:?} K_B{:?} K_A{:?} inconsistent with {m}x{n}, delta_r={delta_r}",
                    enc.b.shape(),
                    enc.a.shape(),
                    key.kb.shape(),
                    key.ka.shape()
                )));
            }
        }
        Ok(Self {
            w_trunc,
            adapters,
            keys,
            delta_r,
            base_rank,
        })
    }

    pub fn w_trunc(&self) -> &Matrix {
        &self.w_trunc
    }

    pub fn adapters(&self) -> &[EncryptedAdapter] {
        &self.adapters
    }

    pub fn keys(&self) -> &[RestorationKey] {
        &self.keys
    }

    pub fn delta_r(&self) -> usize {
        self.delta_r
    }

    pub fn base_rank(&self) -> usize {
        self.base_rank
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w_trunc.shape()
    }

    pub fn num_adapters(&self) -> usize {
        self.adapters.len()
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.adapters.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.adapters.len(),
            });
        }
        Ok(())
    }

    /// `W̃ + B'_k A'_k + K_B K_A`, materialized.
    pub fn restore_merged(&self, k: usize) -> Result<Matrix> {
        self.check_index(k)?;
        self.w_trunc
            .add(&self.adapters[k].product())?
            .add(&self.keys[k].product())
    }

    /// What a holder of the deployed artifacts alone can merge: `W̃ + B'_k A'_k`.
    pub fn unauthorized_merged(&self, k: usize) -> Result<Matrix> {
        self.check_index(k)?;
        self.w_trunc.add(&self.adapters[k].product())
    }

    /// `W̃x + B'(A'x) + K_B(K_A x)` without forming any m×n product.
    pub fn forward_authorized(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_index(k)?;
        let mut y = self.w_trunc.matvec(x)?;
        let enc = &self.adapters[k];
        let key = &self.keys[k];
        let adapter_term = enc.b.matvec(&enc.a.matvec(x)?)?;
        let key_term = key.kb.matvec(&key.ka.matvec(x)?)?;
        for ((yi, ai), ki) in y.iter_mut().zip(adapter_term).zip(key_term) {
            *yi += ai + ki;
        }
        Ok(y)
    }

    /// Inference without keys: `W̃x`, plus `B'(A'x)` when an adapter is chosen.
    pub fn forward_unauthorized(&self, x: &[f64], k: Option<usize>) -> Result<Vec<f64>> {
        let mut y = self.w_trunc.matvec(x)?;
        if let Some(k) = k {
            self.check_index(k)?;
            let enc = &self.adapters[k];
            let adapter_term = enc.b.matvec(&enc.a.matvec(x)?)?;
            y.iter_mut().zip(adapter_term).for_each(|(yi, ai)| *yi += ai);
        }
        Ok(y)
    }
}

/// Splits off `L = TSVD_Δr(W)` and returns `(W − L, key)`.
pub fn extract_spectral_key(w: &Matrix, delta_r: usize) -> Result<(Matrix, SpectralKey)> {
    let max = w.rows().min(w.cols());
    if delta_r == 0 || delta_r > max {
        return Err(Error::InvalidArgument(format!(
            "delta_r={delta_r} outside 1..={max} for a {}x{} weight",
            w.rows(),
            w.cols()
        )));
    }
    let key = SpectralKey::from_factors(tsvd(w, delta_r)?);
    let w_trunc = w.sub(&key.product())?;
    Ok((w_trunc, key))
}

/// Rank expansion `B̃ = [B | U√Σ]`, `Ã = [A ; √Σ Vᵀ]`.
pub fn compensate(adapter: &LoraAdapter, key: &SpectralKey) -> Result<CompensatedAdapter> {
    if adapter.shape() != key.shape() {
        return Err(Error::DimensionMismatch {
            op: "compensate",
            left: adapter.shape(),
            right: key.shape(),
        });
    }
    let f = key.factors();
    Ok(CompensatedAdapter {
        b: adapter.b.concat_cols(&f.left_sqrt_factor())?,
        a: adapter.a.concat_rows(&f.right_sqrt_factor())?,
        base_rank: adapter.rank(),
        delta_r: key.delta_r(),
    })
}

/// SVD of `B̃Ã`: the leading `Δr` components become the restoration key, the
/// next `r` the deployed adapter.
pub fn encrypt_adapter(comp: &CompensatedAdapter) -> Result<(EncryptedAdapter, RestorationKey)> {
    split_product(&comp.product(), comp.delta_r, comp.base_rank)
}

/// Key-splitting on an arbitrary product matrix. Components beyond the true
/// rank come out with zero singular values, so the split stays exact for
/// rank-deficient inputs.
pub(crate) fn split_product(
    product: &Matrix,
    delta_r: usize,
    rank: usize,
) -> Result<(EncryptedAdapter, RestorationKey)> {
    let (m, n) = product.shape();
    let total = rank + delta_r;
    if delta_r == 0 || rank == 0 {
        return Err(Error::InvalidArgument(format!(
            "rank ({rank}) and delta_r ({delta_r}) must be positive"
        )));
    }
    if total > m.min(n) {
        return Err(Error::UnsupportedShape(format!(
            "r + delta_r = {total} exceeds min({m}, {n})"
        )));
    }
    let f = svd(product)?.truncate(total)?;
    let mut left = f.left_sqrt_factor().split_cols(&[delta_r, rank])?.into_iter();
    let mut right = f.right_sqrt_factor().split_rows(&[delta_r, rank])?.into_iter();
    let (kb, enc_b) = (left.next().unwrap(), left.next().unwrap());
    let (ka, enc_a) = (right.next().unwrap(), right.next().unwrap());
    Ok((EncryptedAdapter { b: enc_b, a: enc_a }, RestorationKey { kb, ka }))
}

/// `(B·M, Mᵀ·A)` for a Haar-random orthogonal `M` drawn from `seed`.
pub fn reparameterize(enc: &EncryptedAdapter, seed: Seed) -> Result<EncryptedAdapter> {
    let m = random_orthogonal(enc.rank(), seed);
    reparameterize_with(enc, &m)
}

/// `(B·M, Mᵀ·A)` for a caller-supplied `M`, which must be `r × r` and
/// orthogonal for the product to be preserved.
pub fn reparameterize_with(enc: &EncryptedAdapter, rotation: &Matrix) -> Result<EncryptedAdapter> {
    let r = enc.rank();
    if rotation.shape() != (r, r) {
        return Err(Error::DimensionMismatch {
            op: "reparameterize",
            left: (r, r),
            right: rotation.shape(),
        });
    }
    Ok(EncryptedAdapter {
        b: enc.b.matmul(rotation)?,
        a: rotation.transpose().matmul(&enc.a)?,
    })
}

/// Runs the whole protection pipeline on one layer.
///
/// Each adapter `k` is rotated with `seed.derive(layer_name, k)`, so the
/// output is a pure function of the inputs.
pub fn protect_layer(
    layer_name: &str,
    w: &Matrix,
    adapters: &[LoraAdapter],
    delta_r: usize,
    seed: Seed,
) -> Result<ProtectedLayer> {
    check_adapters(w, adapters, delta_r)?;
    let (w_trunc, key) = extract_spectral_key(w, delta_r)?;
    let mut encrypted = Vec::with_capacity(adapters.len());
    let mut keys = Vec::with_capacity(adapters.len());
    for (k, adapter) in adapters.iter().enumerate() {
        let comp = compensate(adapter, &key)?;
        let (enc, rkey) = encrypt_adapter(&comp)?;
        encrypted.push(reparameterize(&enc, seed.derive(layer_name, k as u64))?);
        keys.push(rkey);
    }
    ProtectedLayer::new(w_trunc, encrypted, keys, delta_r)
}

/// Shared preconditions: common shape and rank, `1 ≤ Δr`, `r + Δr ≤ min(m, n)`.
pub(crate) fn check_adapters(w: &Matrix, adapters: &[LoraAdapter], delta_r: usize) -> Result<()> {
    let (m, n) = w.shape();
    if delta_r == 0 || delta_r > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "delta_r={delta_r} outside 1..={} for a {m}x{n} weight",
            m.min(n)
        )));
    }
    let Some(first) = adapters.first() else {
        return Ok(());
    };
    let r = first.rank();
    for (k, ad) in adapters.iter().enumerate() {
        if ad.shape() != (m, n) {
            return Err(Error::DimensionMismatch {
                op: "adapter vs weight",
                left: ad.shape(),
                right: (m, n),
            });
        }
        if ad.rank() != r {
            return Err(Error::InvalidArgument(format!(
                "adapter {k} has rank {}, expected common rank {r}",
                ad.rank()
            )));
        }
    }
    if r + delta_r > m.min(n) {
        return Err(Error::UnsupportedShape(format!(
            "r + delta_r = {} exceeds min({m}, {n})",
            r + delta_r
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, relative_fro_error};
    use crate::metrics::gram_offdiag_mass;

    fn diag321() -> Matrix {
        Matrix::from_diag(&[3.0, 2.0, 1.0])
    }

    fn zero_adapter(m: usize, n: usize, r: usize) -> LoraAdapter {
        LoraAdapter::new(Matrix::zeros(m, r), Matrix::zeros(r, n)).unwrap()
    }

    fn random_adapter(m: usize, n: usize, r: usize, seed: u64) -> LoraAdapter {
        let mut rng = Seed(seed).rng();
        LoraAdapter::new(
            gaussian_matrix(m, r, 1.0, &mut rng),
            gaussian_matrix(r, n, 1.0, &mut rng),
        )
        .unwrap()
    }

    #[test]
    fn extract_removes_dominant_direction() {
        let (wt, key) = extract_spectral_key(&diag321(), 1).unwrap();
        assert_eq!(wt, Matrix::from_diag(&[0.0, 2.0, 1.0]));
        assert_eq!(key.factors().s, vec![3.0]);
        assert_eq!(key.delta_r(), 1);
    }

    #[test]
    fn full_truncation_leaves_nothing() {
        let (wt, _) = extract_spectral_key(&diag321(), 3).unwrap();
        assert!(wt.max_abs() < 1e-15);
    }

    #[test]
    fn extract_rejects_bad_rank() {
        assert!(matches!(
            extract_spectral_key(&diag321(), 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            extract_spectral_key(&diag321(), 4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn compensating_zero_adapter_with_unit_key() {
        let (_, key) = extract_spectral_key(&Matrix::from_diag(&[3.0, 0.0, 0.0]), 1).unwrap();
        let comp = compensate(&zero_adapter(3, 3, 1), &key).unwrap();
        let r3 = 3f64.sqrt();
        assert_eq!(comp.b, Matrix::from_rows(&[&[0.0, r3], &[0.0, 0.0], &[0.0, 0.0]]));
        assert_eq!(comp.a, Matrix::from_rows(&[&[0.0, 0.0, 0.0], &[r3, 0.0, 0.0]]));
        let p = comp.product();
        assert!(p.sub(&Matrix::from_diag(&[3.0, 0.0, 0.0])).unwrap().max_abs() < 1e-15);
        assert_eq!((comp.base_rank, comp.delta_r), (1, 1));
    }

    #[test]
    fn null_key_leaves_product_unchanged() {
        let key = SpectralKey::from_factors(SvdFactors {
            u: Matrix::from_rows(&[&[1.0], &[0.0], &[0.0]]),
            s: vec![0.0],
            v: Matrix::from_rows(&[&[1.0], &[0.0]]),
        });
        let ad = random_adapter(3, 2, 1, 1);
        let comp = compensate(&ad, &key).unwrap();
        assert_eq!(comp.product(), ad.product());
    }

    #[test]
    fn compensate_rejects_shape_mismatch() {
        let (_, key) = extract_spectral_key(&diag321(), 1).unwrap();
        assert!(matches!(
            compensate(&zero_adapter(3, 4, 1), &key),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn encrypt_splits_diagonal_product() {
        // comp product diag(3, 2, 0) with r = Δr = 1
        let comp = CompensatedAdapter {
            b: Matrix::from_rows(&[&[0.0, 3f64.sqrt()], &[2f64.sqrt(), 0.0], &[0.0, 0.0]]),
            a: Matrix::from_rows(&[&[0.0, 2f64.sqrt(), 0.0], &[3f64.sqrt(), 0.0, 0.0]]),
            base_rank: 1,
            delta_r: 1,
        };
        let (enc, key) = encrypt_adapter(&comp).unwrap();
        let e1 = Matrix::from_rows(&[&[1.0], &[0.0], &[0.0]]);
        let e2 = Matrix::from_rows(&[&[0.0], &[1.0], &[0.0]]);
        let close = |a: &Matrix, b: &Matrix| a.sub(b).unwrap().max_abs() < 1e-14;
        assert!(close(&key.kb, &e1.scale(3f64.sqrt())));
        assert!(close(&key.ka, &e1.transpose().scale(3f64.sqrt())));
        assert!(close(&enc.b, &e2.scale(2f64.sqrt())));
        assert!(close(&enc.a, &e2.transpose().scale(2f64.sqrt())));
    }

    #[test]
    fn keys_carry_everything_for_pure_key_product() {
        let w = gaussian_matrix(10, 8, 1.0, &mut Seed(4).rng());
        let (_, key) = extract_spectral_key(&w, 2).unwrap();
        let comp = compensate(&zero_adapter(10, 8, 3), &key).unwrap();
        let (enc, rkey) = encrypt_adapter(&comp).unwrap();
        assert!(enc.product().frobenius_norm() < 1e-12 * key.product().frobenius_norm());
        assert!(relative_fro_error(&rkey.product(), &key.product()).unwrap() < 1e-12);
    }

    #[test]
    fn encrypt_rejects_oversized_rank() {
        let comp = CompensatedAdapter {
            b: Matrix::zeros(3, 3),
            a: Matrix::zeros(3, 3),
            base_rank: 2,
            delta_r: 2,
        };
        assert!(matches!(encrypt_adapter(&comp), Err(Error::UnsupportedShape(_))));
    }

    #[test]
    fn identity_rotation_is_a_no_op() {
        let ad = random_adapter(6, 5, 2, 8);
        let enc = EncryptedAdapter::new(ad.b().clone(), ad.a().clone()).unwrap();
        assert_eq!(reparameterize_with(&enc, &Matrix::identity(2)).unwrap(), enc);
        assert!(reparameterize_with(&enc, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn quarter_turn_rotates_factors() {
        let enc = EncryptedAdapter::new(
            Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 2.0], &[0.0, 0.0]]),
            Matrix::from_rows(&[&[3.0, 0.0, 0.0], &[0.0, 4.0, 0.0]]),
        )
        .unwrap();
        let rot = Matrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let out = reparameterize_with(&enc, &rot).unwrap();
        assert_eq!(out.b, Matrix::from_rows(&[&[0.0, -1.0], &[2.0, 0.0], &[0.0, 0.0]]));
        assert_eq!(out.product(), enc.product());
    }

    #[test]
    fn rotation_breaks_gram_diagonality_but_not_product() {
        let w = gaussian_matrix(20, 16, 1.0, &mut Seed(2).rng());
        let (_, key) = extract_spectral_key(&w, 2).unwrap();
        let comp = compensate(&random_adapter(20, 16, 4, 3), &key).unwrap();
        let (enc, _) = encrypt_adapter(&comp).unwrap();
        assert!(gram_offdiag_mass(&enc.b) <= 1e-10);
        let rotated = reparameterize(&enc, Seed(77)).unwrap();
        assert!(gram_offdiag_mass(&rotated.b) > 1e-6);
        assert!(relative_fro_error(&rotated.product(), &enc.product()).unwrap() <= 1e-12);
    }

    #[test]
    fn no_adapters_yields_bare_truncation() {
        let layer = protect_layer("l0", &diag321(), &[], 1, Seed(0)).unwrap();
        assert_eq!(layer.num_adapters(), 0);
        assert!(layer.keys().is_empty());
        assert_eq!(layer.w_trunc(), &Matrix::from_diag(&[0.0, 2.0, 1.0]));
        assert!(matches!(layer.restore_merged(0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn zero_adapter_restores_original() {
        let layer = protect_layer("l0", &diag321(), &[zero_adapter(3, 3, 1)], 1, Seed(0)).unwrap();
        let restored = layer.restore_merged(0).unwrap();
        assert!(restored.sub(&diag321()).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn dropping_key_term_costs_exactly_its_norm() {
        let w = gaussian_matrix(12, 10, 1.0, &mut Seed(21).rng());
        let ad = random_adapter(12, 10, 3, 22);
        let layer = protect_layer("x", &w, std::slice::from_ref(&ad), 2, Seed(5)).unwrap();
        let truth = w.add(&ad.product()).unwrap();
        let gap = layer
            .unauthorized_merged(0)
            .unwrap()
            .sub(&truth)
            .unwrap()
            .frobenius_norm();
        let key_norm = layer.keys()[0].product().frobenius_norm();
        assert!((gap - key_norm).abs() <= 1e-10 * key_norm);
    }

    #[test]
    fn forward_paths_on_diagonal_layer() {
        let layer = protect_layer("l0", &diag321(), &[zero_adapter(3, 3, 1)], 1, Seed(0)).unwrap();
        assert_eq!(
            layer.forward_unauthorized(&[1.0, 0.0, 0.0], None).unwrap(),
            vec![0.0; 3]
        );
        assert_eq!(
            layer.forward_unauthorized(&[0.0, 1.0, 0.0], None).unwrap(),
            vec![0.0, 2.0, 0.0]
        );
        let y = layer.forward_authorized(0, &[1.0, 0.0, 0.0]).unwrap();
        assert!((y[0] - 3.0).abs() < 1e-14 && y[1].abs() < 1e-14 && y[2].abs() < 1e-14);
        assert_eq!(layer.forward_authorized(0, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(layer.forward_authorized(0, &[0.0; 2]).is_err());
        assert!(layer.forward_unauthorized(&[0.0; 4], None).is_err());
        assert!(layer.forward_authorized(1, &[0.0; 3]).is_err());
    }

    #[test]
    fn protect_rejects_mixed_ranks_and_infeasible_delta() {
        let w = gaussian_matrix(6, 6, 1.0, &mut Seed(1).rng());
        let mixed = [random_adapter(6, 6, 2, 1), random_adapter(6, 6, 3, 2)];
        assert!(protect_layer("l", &w, &mixed, 1, Seed(0)).is_err());
        let wide = [random_adapter(6, 6, 4, 1)];
        assert!(matches!(
            protect_layer("l", &w, &wide, 3, Seed(0)),
            Err(Error::UnsupportedShape(_))
        ));
        assert!(protect_layer("l", &w, &wide, 0, Seed(0)).is_err());
        assert!(protect_layer("l", &w, &[random_adapter(5, 6, 1, 1)], 1, Seed(0)).is_err());
    }

    #[test]
    fn protection_is_deterministic_and_seed_sensitive() {
        let w = gaussian_matrix(10, 9, 1.0, &mut Seed(1).rng());
        let ads = [random_adapter(10, 9, 2, 2), random_adapter(10, 9, 2, 3)];
        let a = protect_layer("l", &w, &ads, 2, Seed(9)).unwrap();
        assert_eq!(a, protect_layer("l", &w, &ads, 2, Seed(9)).unwrap());
        assert_ne!(a, protect_layer("l", &w, &ads, 2, Seed(10)).unwrap());
        assert_ne!(a, protect_layer("m", &w, &ads, 2, Seed(9)).unwrap());
        // Different adapters in one layer get different rotations.
        assert_eq!(a.w_trunc(), protect_layer("m", &w, &ads, 2, Seed(9)).unwrap().w_trunc());
    }

    #[test]
    fn new_rejects_inconsistent_parts() {
        let enc = EncryptedAdapter::new(Matrix::zeros(4, 2), Matrix::zeros(2, 3)).unwrap();
        let key = RestorationKey::new(Matrix::zeros(4, 1), Matrix::zeros(1, 3)).unwrap();
        assert!(ProtectedLayer::new(Matrix::zeros(4, 3), vec![enc.clone()], vec![key.clone()], 1).is_ok());
        assert!(ProtectedLayer::new(Matrix::zeros(4, 3), vec![enc.clone()], vec![], 1).is_err());
        assert!(ProtectedLayer::new(Matrix::zeros(4, 3), vec![enc.clone()], vec![key.clone()], 2).is_err());
        assert!(ProtectedLayer::new(Matrix::zeros(5, 3), vec![enc], vec![key], 1).is_err());
    }
}
