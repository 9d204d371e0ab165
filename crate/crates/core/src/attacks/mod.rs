//! Weight-recovery adversaries and baseline protection schemes.
//!
//! The attacker sees merged weights `W'_k` for several tasks and tries to
//! recover the shared base weight. [`build_observations`] produces those
//! merges for each protection scenario; [`spectral_detuning`] and
//! [`finetune_recovery`] are the two adversaries.

mod baselines;
mod finetune;
mod sdt;

use std::fmt;
use std::str::FromStr;

pub use baselines::{protect_with_random_key, protect_with_self_derived_key};
pub use finetune::{
    finetune_recovery, least_squares_recovery, make_samples, suggested_learning_rate, FinetuneConfig, Sample,
};
pub use sdt::{scheduled_rank, spectral_detuning, write_trace, AttackResult, SdtConfig, TraceRecord};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Seed};
use crate::pipeline::{protect_layer, LoraAdapter, ProtectedLayer};

/// Which protection, if any, the observed merges went through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Unprotected,
    Lorenc,
    RandomKey,
    SelfDerivedKey,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::Unprotected,
        Scenario::Lorenc,
        Scenario::RandomKey,
        Scenario::SelfDerivedKey,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Unprotected => "unprotected",
            Scenario::Lorenc => "lorenc",
            Scenario::RandomKey => "random_key",
            Scenario::SelfDerivedKey => "self_derived_key",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unprotected" => Ok(Scenario::Unprotected),
            "lorenc" => Ok(Scenario::Lorenc),
            "random_key" | "random-key" => Ok(Scenario::RandomKey),
            "self_derived_key" | "self-derived-key" | "self_derived" | "self-derived" => Ok(Scenario::SelfDerivedKey),
            other => Err(Error::InvalidArgument(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Attacker-visible merged weights, all of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedObservationSet {
    merged: Vec<Matrix>,
    assumed_rank: usize,
}

impl MergedObservationSet {
    pub fn new(merged: Vec<Matrix>, assumed_rank: usize) -> Result<Self> {
        let Some(first) = merged.first() else {
            return Err(Error::InvalidArgument("need at least one observation".into()));
        };
        let shape = first.shape();
        if let Some(bad) = merged.iter().find(|m| m.shape() != shape) {
            return Err(Error::DimensionMismatch {
                op: "observation set",
                left: shape,
                right: bad.shape(),
            });
        }
        if assumed_rank == 0 {
            return Err(Error::InvalidArgument("assumed rank must be positive".into()));
        }
        Ok(Self { merged, assumed_rank })
    }

    pub fn merged(&self) -> &[Matrix] {
        &self.merged
    }

    pub fn len(&self) -> usize {
        self.merged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }

    pub fn assumed_rank(&self) -> usize {
        self.assumed_rank
    }

    pub fn shape(&self) -> (usize, usize) {
        self.merged[0].shape()
    }
}

/// Key-free merges `W̃ + B'_k A'_k` of an already-protected layer.
pub fn observations_from_layer(layer: &ProtectedLayer) -> Result<MergedObservationSet> {
    let merged = (0..layer.num_adapters())
        .map(|k| layer.unauthorized_merged(k))
        .collect::<Result<Vec<_>>>()?;
    MergedObservationSet::new(merged, layer.base_rank().max(1))
}

/// Merges an attacker would collect for `scenario`, protecting on the fly
/// with `(layer_name, seed)` where a protection scheme applies.
pub fn build_observations(
    layer_name: &str,
    w: &Matrix,
    adapters: &[LoraAdapter],
    scenario: Scenario,
    delta_r: usize,
    seed: Seed,
) -> Result<MergedObservationSet> {
    if adapters.is_empty() {
        return Err(Error::InvalidArgument("need at least one adapter".into()));
    }
    let layer = match scenario {
        Scenario::Unprotected => {
            let merged = adapters
                .iter()
                .map(|ad| w.add(&ad.product()))
                .collect::<Result<Vec<_>>>()?;
            return MergedObservationSet::new(merged, adapters[0].rank());
        }
        Scenario::Lorenc => protect_layer(layer_name, w, adapters, delta_r, seed)?,
        Scenario::RandomKey => protect_with_random_key(layer_name, w, adapters, delta_r, seed)?,
        Scenario::SelfDerivedKey => protect_with_self_derived_key(layer_name, w, adapters, delta_r, seed)?,
    };
    observations_from_layer(&layer)
}
