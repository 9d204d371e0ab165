//! Training-free protection of foundation-model weight matrices and their
//! LoRA adapters.
//!
//! The dominant rank-`Δr` spectral component of each weight matrix is cut out
//! and withheld. Adapters are compensated so that `W̃ + B̃Ã = W + BA`, then
//! split by SVD into a deployable rank-`r` adapter and a rank-`Δr`
//! restoration key, and finally rotated by a random orthogonal matrix to hide
//! the orthogonality SVD leaves behind. Authorized inference adds the key
//! term back on the fly.
//!
//! Modules:
//! - [`linalg`]: dense matrices, SVD, Haar sampling
//! - [`pipeline`]: protection and authorized restoration
//! - [`attacks`]: weight-recovery adversaries and baseline protection schemes
//! - [`metrics`]: W-Error, energy accounting, stealthiness, overhead
//! - [`container`]: the `LREN` on-disk format and deploy/keystore split
//! - [`synth`]: synthetic weights and adapters for experiments

pub mod attacks;
pub mod container;
mod error;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{Matrix, Seed};
pub use pipeline::{LoraAdapter, ProtectedLayer, DEFAULT_DELTA_R};
