//! Pairwise key establishment: reconciliation, selection matrix, greedy
//! partition into eps1-secure subsets, XOR combination and seeded extraction.

mod extract;
mod matrix;
mod pipeline;
mod reconcile;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversaryError;
use crate::bits::BitsError;
use crate::route::RouteError;

pub use extract::{extract, output_len, toeplitz_hash, Secret};
pub use matrix::{
    build_selection_matrix, is_eps1_secure, naive_partition, xor_combine, MatrixRow, Partition,
    SelectionMatrix, Subset,
};
pub use pipeline::{b_total, pair_pipeline, PairConfig, PairOutcome};
pub use reconcile::{
    reconcile, DigestMode, ReconOffer, ReconResponse, ReconciliationSession, RidDigest,
    DEFAULT_DIGEST_BITS, MAX_DIGEST_BITS,
};

#[derive(Debug, Error, PartialEq)]
pub enum KeygenError {
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Bits(#[from] BitsError),
    #[error("entropy budget {k:.3} bits with eps2 = {eps2} leaves no output bits")]
    EntropyBudget { k: f64, eps2: f64 },
    #[error("entropy bound {k} exceeds the {width}-bit input")]
    EntropyExceedsInput { k: f64, width: usize },
    #[error("seed has {got} bits, need {need}")]
    SeedTooShort { got: usize, need: usize },
    #[error("nothing to combine")]
    Empty,
    #[error("invalid security parameter: {0}")]
    BadParams(String),
    #[error("digest width {0} is not a multiple of 8 in [8, 256]")]
    BadDigestWidth(usize),
}

/// All security knobs in one place.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    /// Bound on any single node knowing every route of a subset.
    pub eps1: f64,
    /// Statistical distance of the extracted secret from uniform.
    pub eps2: f64,
    /// Smoothing mass for the smooth min-entropy.
    pub eps3: f64,
    /// Extractor seed length, bits.
    pub seed_len: usize,
}

impl Default for SecurityParams {
    fn default() -> Self {
        Self {
            eps1: 1e-3,
            eps2: 0.125,
            eps3: 1e-4,
            seed_len: 128,
        }
    }
}

impl SecurityParams {
    pub fn validate(&self) -> Result<(), KeygenError> {
        for (name, v) in [("eps1", self.eps1), ("eps2", self.eps2), ("eps3", self.eps3)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(KeygenError::BadParams(format!("{name} = {v} not in (0, 1)")));
            }
        }
        if self.seed_len < 1 {
            return Err(KeygenError::BadParams("seed_len must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(SecurityParams::default().validate().is_ok());
        let bad = SecurityParams {
            eps1: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SecurityParams {
            seed_len: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
