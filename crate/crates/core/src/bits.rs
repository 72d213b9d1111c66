//! Ordered bit strings used for raw, sifted and final keys.

use std::fmt;
use std::ops::{BitXor, Index};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BitsError {
    #[error("invalid hex bit string: {0}")]
    Hex(String),
    #[error("declared length {declared} does not fit in {available} hex-encoded bits")]
    Length { declared: usize, available: usize },
    #[error("invalid bit character {0:?}")]
    Char(char),
}

/// A sequence of bits stored one per byte (each 0 or 1).
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        Self(bits.into_iter().map(u8::from).collect())
    }

    /// Builds from an iterator of bit values; any nonzero value becomes 1.
    pub fn from_bits<I: IntoIterator<Item = u8>>(bits: I) -> Self {
        Self(bits.into_iter().map(|b| (b != 0) as u8).collect())
    }

    /// Parses a string of `0`/`1` characters. Whitespace is ignored.
    pub fn parse(s: &str) -> Result<Self, BitsError> {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(BitsError::Char(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }

    pub fn random<R: rand::Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random::<bool>() as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        self.0.get(i).copied()
    }

    pub fn set(&mut self, i: usize, bit: u8) {
        self.0[i] = (bit != 0) as u8;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    pub fn push(&mut self, bit: u8) {
        self.0.push((bit != 0) as u8);
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = u8> + ExactSizeIterator + '_ {
        self.0.iter().copied()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn hamming_distance(&self, other: &BitString) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// Parity of the bits at the given positions.
    pub fn parity_of<I: IntoIterator<Item = usize>>(&self, positions: I) -> u8 {
        positions.into_iter().fold(0, |acc, i| acc ^ self.0[i])
    }

    pub fn slice(&self, start: usize, end: usize) -> BitString {
        Self(self.0[start..end].to_vec())
    }

    /// Keeps every bit whose index is not in `drop` (which must be sorted).
    pub fn without_indices(&self, drop: &[usize]) -> BitString {
        let mut out = Vec::with_capacity(self.len().saturating_sub(drop.len()));
        let mut d = drop.iter().peekable();
        for (i, &b) in self.0.iter().enumerate() {
            if d.peek() == Some(&&i) {
                d.next();
                continue;
            }
            out.push(b);
        }
        Self(out)
    }

    /// MSB-first packing into bytes, zero padded; length is not encoded.
    pub fn to_hex(&self) -> String {
        let bytes: Vec<u8> = self
            .0
            .chunks(8)
            .map(|chunk| chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b << (7 - i))))
            .collect();
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self, BitsError> {
        let bytes = hex::decode(s.trim()).map_err(|e| BitsError::Hex(e.to_string()))?;
        let available = bytes.len() * 8;
        if len > available || available >= len + 8 {
            return Err(BitsError::Length {
                declared: len,
                available,
            });
        }
        Ok(Self((0..len).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1).collect()))
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Serialized as a `"0101"` string.
impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BitString::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl Index<usize> for BitString {
    type Output = u8;
    fn index(&self, i: usize) -> &u8 {
        &self.0[i]
    }
}

impl BitXor for &BitString {
    type Output = BitString;

    /// Panics if lengths differ.
    fn bitxor(self, rhs: &BitString) -> BitString {
        assert_eq!(self.len(), rhs.len(), "xor of unequal-length bit strings");
        BitString(self.0.iter().zip(&rhs.0).map(|(a, b)| a ^ b).collect())
    }
}

impl FromIterator<u8> for BitString {
    fn from_iter<T: IntoIterator<Item = u8>>(iter: T) -> Self {
        Self::from_bits(iter)
    }
}

impl From<Vec<u8>> for BitString {
    fn from(v: Vec<u8>) -> Self {
        Self::from_bits(v)
    }
}
