//! Fixed-width bit strings.
//!
//! Bit 0 is the most significant bit. When packed into bytes the first bit
//! lands in the high bit of the first byte (big-endian, MSB-first); unused
//! trailing bits of the last byte are always zero.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitsError {
    #[error("value needs {needed} bits but width is {width}")]
    Overflow { needed: u64, width: usize },
    #[error("width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("invalid character {0:?} in bit string")]
    BadChar(char),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    len: usize,
    bytes: Vec<u8>,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            bytes: vec![0; len.div_ceil(8)],
        }
    }

    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut out = Self::zeros(len);
        rng.fill_bytes(&mut out.bytes);
        out.clear_padding();
        out
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            out.set(i, b);
        }
        out
    }

    /// Encodes `value` on exactly `width` bits, big-endian.
    pub fn from_biguint(value: &BigUint, width: usize) -> Result<Self, BitsError> {
        let needed = value.bits();
        if needed > width as u64 {
            return Err(BitsError::Overflow { needed, width });
        }
        let mut out = Self::zeros(width);
        for i in 0..needed {
            if value.bit(i) {
                out.set(width - 1 - i as usize, true);
            }
        }
        Ok(out)
    }

    pub fn from_u64(value: u64, width: usize) -> Result<Self, BitsError> {
        Self::from_biguint(&BigUint::from(value), width)
    }

    pub fn to_biguint(&self) -> BigUint {
        let mut v = BigUint::zero();
        for i in 0..self.len {
            v <<= 1u8;
            if self.get(i) {
                v += 1u8;
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 0x80 >> (i % 8);
        if value {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn count_ones(&self) -> u32 {
        self.bytes.iter().map(|b| b.count_ones()).sum()
    }

    pub fn xor_assign(&mut self, other: &BitString) -> Result<(), BitsError> {
        if self.len != other.len {
            return Err(BitsError::WidthMismatch(self.len, other.len));
        }
        for (a, b) in self.bytes.iter_mut().zip(&other.bytes) {
            *a ^= b;
        }
        Ok(())
    }

    /// First `len` bits.
    pub fn prefix(&self, len: usize) -> BitString {
        assert!(len <= self.len);
        let mut out = BitString::zeros(len);
        out.bytes.copy_from_slice(&self.bytes[..len.div_ceil(8)]);
        out.clear_padding();
        out
    }

    fn clear_padding(&mut self) {
        let rem = self.len % 8;
        if rem != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xffu8 << (8 - rem);
            }
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl std::str::FromStr for BitString {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(BitsError::BadChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_bools(&bits))
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first_layout() {
        let b = BitString::from_u64(0b101, 3).unwrap();
        assert_eq!(b.to_string(), "101");
        assert_eq!(b.as_bytes(), &[0b1010_0000]);
    }

    #[test]
    fn overflow_is_rejected() {
        assert_eq!(
            BitString::from_u64(8, 3),
            Err(BitsError::Overflow {
                needed: 4,
                width: 3
            })
        );
    }

    #[test]
    fn xor_width_mismatch() {
        let mut a = BitString::zeros(4);
        assert!(a.xor_assign(&BitString::zeros(5)).is_err());
    }

    proptest! {
        #[test]
        fn biguint_round_trip(v in any::<u64>(), extra in 0usize..20) {
            let width = 64 + extra;
            let b = BitString::from_u64(v, width).unwrap();
            prop_assert_eq!(b.to_biguint(), BigUint::from(v));
            let parsed: BitString = b.to_string().parse().unwrap();
            prop_assert_eq!(parsed, b);
        }
    }
}
