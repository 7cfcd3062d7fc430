//! Seeded extraction by Toeplitz hashing.
//!
//! An `n`-bit input and an `m`-bit output use a seed of `n + m - 1` bits.
//! Seed bit `t` fills the diagonal `i - j = t - (n - 1)`, so row `i` of the
//! matrix is `seed[i + n - 1 - j]` for column `j`. Output bit `i` is the
//! parity of row `i` ANDed with the input. Bits are MSB-first throughout.

use serde::{Deserialize, Serialize};

use super::KeygenError;
use crate::bits::BitString;

/// Output length from the leftover hash lemma, `floor(k - 2 log2(1/eps2))`.
pub fn output_len(k: f64, eps2: f64) -> Result<usize, KeygenError> {
    if !(eps2 > 0.0 && eps2 < 1.0) {
        return Err(KeygenError::BadParams(format!("eps2 = {eps2} not in (0, 1)")));
    }
    let s = (k - 2.0 * (1.0 / eps2).log2()).floor();
    if !(s >= 1.0) {
        return Err(KeygenError::EntropyBudget { k, eps2 });
    }
    Ok(s as usize)
}

pub fn toeplitz_hash(
    input: &BitString,
    seed: &BitString,
    out_len: usize,
) -> Result<BitString, KeygenError> {
    let n = input.len();
    let need = (n + out_len).saturating_sub(1);
    if seed.len() < need {
        return Err(KeygenError::SeedTooShort {
            got: seed.len(),
            need,
        });
    }
    let ones: Vec<usize> = (0..n).filter(|&j| input.get(j)).collect();
    let mut out = BitString::zeros(out_len);
    for i in 0..out_len {
        let parity = ones
            .iter()
            .fold(false, |acc, &j| acc ^ seed.get(i + n - 1 - j));
        out.set(i, parity);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Secret {
    pub bits: BitString,
    pub seed: BitString,
    /// Entropy bound the output length was sized for.
    pub k: f64,
    pub eps2: f64,
}

impl Secret {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

pub fn extract(
    input: &BitString,
    k: f64,
    eps2: f64,
    seed: &BitString,
) -> Result<Secret, KeygenError> {
    if k > input.len() as f64 {
        return Err(KeygenError::EntropyExceedsInput {
            k,
            width: input.len(),
        });
    }
    let s = output_len(k, eps2)?;
    let bits = toeplitz_hash(input, seed, s)?;
    Ok(Secret {
        bits,
        seed: seed.clone(),
        k,
        eps2,
    })
}
