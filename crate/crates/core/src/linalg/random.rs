//! Seeded randomness: Gaussian matrices and Haar-distributed orthogonal matrices.

use ndarray_linalg::QR;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::Matrix;

/// Explicit RNG seed. Identical seeds reproduce identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(self.0)
    }

    /// Sub-seed bound to a label and index, e.g. `(layer name, adapter index)`.
    ///
    /// SHA-256 over the length-prefixed encoding, truncated to 64 bits, so the
    /// derivation is stable across platforms and releases.
    pub fn derive(self, label: &str, index: u64) -> Seed {
        let digest = Sha256::new()
            .chain_update(self.0.to_le_bytes())
            .chain_update((label.len() as u64).to_le_bytes())
            .chain_update(label.as_bytes())
            .chain_update(index.to_le_bytes())
            .finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        Seed(u64::from_le_bytes(head))
    }
}

/// `rows × cols` matrix with i.i.d. `N(0, std²)` entries.
pub fn gaussian_matrix<R: rand::Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Matrix {
    assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect::<Vec<f64>>();
    Matrix::from_raw(rows, cols, data)
}

/// Haar-random `n × n` orthogonal matrix.
///
/// QR of a standard Gaussian matrix, then each column of `Q` is multiplied by
/// `sign(R_ii)`. Without that correction the distribution is biased by the QR
/// routine's own sign choice and is not Haar.
pub fn random_orthogonal(n: usize, seed: Seed) -> Matrix {
    haar_orthogonal(n, &mut seed.rng())
}

pub(crate) fn haar_orthogonal<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    assert!(n >= 1, "orthogonal matrix size must be positive");
    let g = gaussian_matrix(n, n, 1.0, rng).to_ndarray();
    let (q, r) = g.qr().expect("LAPACK QR of a finite square matrix");
    let signs: Vec<f64> = (0..n).map(|i| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }).collect();
    Matrix::from_ndarray(&q.view())
        .scale_columns(&signs)
        .expect("square factors")
}

/// `n × k` matrix with orthonormal columns, uniformly distributed on the
/// Stiefel manifold (leading columns of a Haar orthogonal matrix).
pub fn random_orthonormal_columns<R: rand::Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Matrix {
    assert!(k >= 1 && k <= n, "need 1 <= k <= n");
    haar_orthogonal(n, rng).leading_cols(k).expect("k within range")
}
