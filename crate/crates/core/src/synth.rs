//! Synthetic stand-ins for foundation-model layers and task adapters.
//!
//! Pure Gaussian weights have a flat spectrum, so the generator can plant a
//! low-rank "spike" whose singular values sit at a fixed multiple of the
//! Gaussian bulk edge `√m + √n`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, random_orthonormal_columns, Matrix, Seed};
use crate::pipeline::LoraAdapter;

/// Planted low-rank component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spike {
    pub rank: usize,
    /// Spike singular value divided by the bulk edge `√m + √n`.
    pub ratio: f64,
}

impl Default for Spike {
    fn default() -> Self {
        Self { rank: 4, ratio: 10.0 }
    }
}

/// `G + U·diag(s)·Vᵀ` with `G` standard Gaussian and Haar-random `U`, `V`.
pub fn spiked_weight<R: Rng + ?Sized>(m: usize, n: usize, spike: Option<Spike>, rng: &mut R) -> Result<Matrix> {
    let bulk = gaussian_matrix(m, n, 1.0, rng);
    let Some(spike) = spike.filter(|s| s.rank > 0) else {
        return Ok(bulk);
    };
    if spike.rank > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "spike rank {} exceeds min({m}, {n})",
            spike.rank
        )));
    }
    if !(spike.ratio.is_finite() && spike.ratio >= 0.0) {
        return Err(Error::InvalidArgument(format!("spike ratio {} invalid", spike.ratio)));
    }
    let sigma = spike.ratio * ((m as f64).sqrt() + (n as f64).sqrt());
    let u = random_orthonormal_columns(m, spike.rank, rng);
    let v = random_orthonormal_columns(n, spike.rank, rng);
    let planted = u.scale(sigma).matmul(&v.transpose())?;
    bulk.add(&planted)
}

/// Adapter with i.i.d. `N(0, std²)` entries in both factors.
pub fn gaussian_adapter<R: Rng + ?Sized>(m: usize, n: usize, r: usize, std: f64, rng: &mut R) -> LoraAdapter {
    LoraAdapter::new(gaussian_matrix(m, r, std, rng), gaussian_matrix(r, n, std, rng)).expect("factor shapes agree")
}

/// Generator settings for a synthetic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub layers: usize,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub adapters: usize,
    pub spike: Option<Spike>,
    pub adapter_std: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            layers: 1,
            m: 64,
            n: 64,
            rank: 4,
            adapters: 1,
            spike: Some(Spike::default()),
            adapter_std: 1.0,
        }
    }
}

/// One generated layer: base weight and its task adapters.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLayer {
    pub name: String,
    pub w: Matrix,
    pub adapters: Vec<LoraAdapter>,
}

impl SyntheticLayer {
    /// `W + B_k A_k`.
    pub fn merged(&self, k: usize) -> Result<Matrix> {
        let ad = self.adapters.get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            len: self.adapters.len(),
        })?;
        self.w.add(&ad.product())
    }
}

/// Canonical layer name; zero-padded so lexical order is index order.
pub fn layer_name(index: usize) -> String {
    format!("layer{index:03}")
}

/// Generates `spec.layers` layers, each from its own derived sub-seed.
pub fn generate_model(spec: &ModelSpec, seed: Seed) -> Result<Vec<SyntheticLayer>> {
    if spec.m == 0 || spec.n == 0 || spec.rank == 0 {
        return Err(Error::InvalidArgument("dimensions and rank must be positive".into()));
    }
    if spec.rank > spec.m.min(spec.n) {
        return Err(Error::InvalidArgument(format!(
            "adapter rank {} exceeds min({}, {})",
            spec.rank, spec.m, spec.n
        )));
    }
    (0..spec.layers)
        .map(|i| {
            let name = layer_name(i);
            let mut rng = seed.derive(&name, 0).rng();
            let w = spiked_weight(spec.m, spec.n, spec.spike, &mut rng)?;
            let adapters = (0..spec.adapters)
                .map(|_| gaussian_adapter(spec.m, spec.n, spec.rank, spec.adapter_std, &mut rng))
                .collect();
            Ok(SyntheticLayer { name, w, adapters })
        })
        .collect()
}
