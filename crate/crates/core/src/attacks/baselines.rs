//! Comparison protection schemes whose keys ignore the base weight's spectrum.

use crate::error::Result;
use crate::linalg::{gaussian_matrix, tsvd, Matrix, Seed};
use crate::pipeline::{
    check_adapters, compensate, encrypt_adapter, reparameterize, split_product, ProtectedLayer, SpectralKey,
};

/// Same pipeline as [`crate::pipeline::protect_layer`], but the withheld
/// component is a random rank-`Δr` matrix (product of Gaussian factors)
/// rescaled to the Frobenius norm of the true top-`Δr` component. Magnitude
/// therefore matches; only the structure differs.
pub fn protect_with_random_key(
    layer_name: &str,
    w: &Matrix,
    adapters: &[crate::pipeline::LoraAdapter],
    delta_r: usize,
    seed: Seed,
) -> Result<ProtectedLayer> {
    check_adapters(w, adapters, delta_r)?;
    let (m, n) = w.shape();
    let true_energy: f64 = tsvd(w, delta_r)?.s.iter().map(|s| s * s).sum();

    let mut rng = seed.derive(&format!("{layer_name}#random_key"), 0).rng();
    let raw = gaussian_matrix(m, delta_r, 1.0, &mut rng).matmul(&gaussian_matrix(delta_r, n, 1.0, &mut rng))?;
    let raw_norm = raw.frobenius_norm();
    let l_rand = if raw_norm > 0.0 {
        raw.scale(true_energy.sqrt() / raw_norm)
    } else {
        raw
    };

    let key = SpectralKey::from_factors(tsvd(&l_rand, delta_r)?);
    let w_trunc = w.sub(&key.product())?;
    let mut encrypted = Vec::with_capacity(adapters.len());
    let mut keys = Vec::with_capacity(adapters.len());
    for (k, adapter) in adapters.iter().enumerate() {
        let (enc, rkey) = encrypt_adapter(&compensate(adapter, &key)?)?;
        encrypted.push(reparameterize(&enc, seed.derive(layer_name, k as u64))?);
        keys.push(rkey);
    }
    ProtectedLayer::new(w_trunc, encrypted, keys, delta_r)
}

/// Each adapter is keyed by its own top-`Δr` component `TSVD_Δr(B_k A_k)`.
/// The base weight is deployed untouched, so nothing of `W` is withheld.
pub fn protect_with_self_derived_key(
    layer_name: &str,
    w: &Matrix,
    adapters: &[crate::pipeline::LoraAdapter],
    delta_r: usize,
    seed: Seed,
) -> Result<ProtectedLayer> {
    check_adapters(w, adapters, delta_r)?;
    let mut encrypted = Vec::with_capacity(adapters.len());
    let mut keys = Vec::with_capacity(adapters.len());
    for (k, adapter) in adapters.iter().enumerate() {
        let (enc, rkey) = split_product(&adapter.product(), delta_r, adapter.rank())?;
        encrypted.push(reparameterize(&enc, seed.derive(layer_name, k as u64))?);
        keys.push(rkey);
    }
    ProtectedLayer::new(w.clone(), encrypted, keys, delta_r)
}
