//! Classical post-processing: reconciliation between the dealer and the
//! access set, privacy amplification and the one-time pad.

pub mod reconcile;
pub mod toeplitz;
pub mod vernam;

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::bits::{BitString, BitsError};
use crate::channel::ChannelError;
use crate::stats::binary_entropy;

pub use reconcile::{reconcile, BlockConfig, ReconcileReport, Reconciled};
pub use toeplitz::{privacy_amplify, ToeplitzSeed};
pub use vernam::{xor_prefix, OneTimePad};

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error("key lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("QBER {0} outside [0, 0.5)")]
    Qber(f64),
    #[error("keys still differ after {rounds} verification rounds")]
    NonConvergence { rounds: u32 },
    #[error("Toeplitz seed must have {expected} bits, got {actual}")]
    SeedLength { expected: usize, actual: usize },
    #[error("hash of a {key}-bit key to {n_out} bits needs a matching seed, got {seed_in} → {seed_out}")]
    Dimensions {
        key: usize,
        n_out: usize,
        seed_in: usize,
        seed_out: usize,
    },
    #[error("key too short: {needed} bits needed, {available} available")]
    KeyTooShort { needed: usize, available: usize },
    #[error("key reuse refused: {needed} bits needed, only {remaining} unspent")]
    KeyReuse { needed: usize, remaining: usize },
    #[error("key stage can only move forward ({from} → {to})")]
    Stage { from: KeyStage, to: KeyStage },
    #[error("malformed key file: {0}")]
    KeyFile(String),
    #[error(transparent)]
    Bits(#[from] BitsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Secure length rule used for privacy amplification, as printed in reports.
pub const LENGTH_FORMULA: &str = "floor(n*(1-2*h2(q))) - leak - eps";

/// `max(0, ⌊n(1 − 2h₂(q))⌋ − leaked − ε)`; zero for `q` outside `[0, 0.5)`.
pub fn final_key_length(n: usize, qber: f64, leaked_bits: u64, epsilon_exponent: u32) -> usize {
    if !(0.0..0.5).contains(&qber) {
        return 0;
    }
    let budget = (n as f64 * (1.0 - 2.0 * binary_entropy(qber))).floor();
    let len = budget - leaked_bits as f64 - epsilon_exponent as f64;
    if len > 0.0 {
        len as usize
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyStage {
    Sifted,
    Reconciled,
    Final,
}

impl fmt::Display for KeyStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyStage::Sifted => "sifted",
            KeyStage::Reconciled => "reconciled",
            KeyStage::Final => "final",
        })
    }
}

impl FromStr for KeyStage {
    type Err = PostprocError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sifted" => Ok(KeyStage::Sifted),
            "reconciled" => Ok(KeyStage::Reconciled),
            "final" => Ok(KeyStage::Final),
            other => Err(PostprocError::KeyFile(format!("unknown stage {other:?}"))),
        }
    }
}

/// Key bits with their processing stage and accumulated leakage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyMaterial {
    stage: KeyStage,
    bits: BitString,
    leaked_bits: u64,
    qber_estimate: f64,
}

impl KeyMaterial {
    pub fn sifted(bits: BitString, qber_estimate: f64) -> Self {
        Self {
            stage: KeyStage::Sifted,
            bits,
            leaked_bits: 0,
            qber_estimate,
        }
    }

    pub fn stage(&self) -> KeyStage {
        self.stage
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn leaked_bits(&self) -> u64 {
        self.leaked_bits
    }

    pub fn qber_estimate(&self) -> f64 {
        self.qber_estimate
    }

    /// Moves to a later stage with new bits, adding `leaked` to the tally.
    pub fn advance(self, to: KeyStage, bits: BitString, leaked: u64) -> Result<Self, PostprocError> {
        if to <= self.stage {
            return Err(PostprocError::Stage { from: self.stage, to });
        }
        Ok(Self {
            stage: to,
            bits,
            leaked_bits: self.leaked_bits + leaked,
            qber_estimate: self.qber_estimate,
        })
    }

    /// One header line, then the bits as MSB-first hex.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "# stage={} length={} leaked={} qber={:.6} formula={}",
            self.stage,
            self.bits.len(),
            self.leaked_bits,
            self.qber_estimate,
            LENGTH_FORMULA.replace(' ', "")
        )?;
        writeln!(out, "{}", self.bits.to_hex())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, PostprocError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| PostprocError::KeyFile("empty file".into()))??;
        let body = lines.next().transpose()?.unwrap_or_default();
        let fields = header
            .strip_prefix("# ")
            .ok_or_else(|| PostprocError::KeyFile("missing header".into()))?;
        let field = |name: &str| {
            fields
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(name)?.strip_prefix('='))
                .ok_or_else(|| PostprocError::KeyFile(format!("header lacks {name}")))
        };
        let bad = |name: &str| PostprocError::KeyFile(format!("bad {name}"));
        let stage = field("stage")?.parse()?;
        let length = field("length")?.parse().map_err(|_| bad("length"))?;
        let leaked_bits = field("leaked")?.parse().map_err(|_| bad("leaked"))?;
        let qber_estimate = field("qber")?.parse().map_err(|_| bad("qber"))?;
        Ok(Self {
            stage,
            bits: BitString::from_hex(&body, length)?,
            leaked_bits,
            qber_estimate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_examples() {
        assert_eq!(final_key_length(1800, 0.0, 0, 40), 1760);
        assert_eq!(final_key_length(1800, 0.25, 0, 40), 0);
        assert_eq!(final_key_length(1800, 0.5, 0, 0), 0);
        assert_eq!(final_key_length(1800, f64::NAN, 0, 0), 0);
        // 1800·(1 − 2·h₂(0.05)) = 768.97
        assert_eq!(final_key_length(1800, 0.05, 500, 40), 228);
        assert_eq!(final_key_length(1800, 0.05, 800, 40), 0);
    }

    #[test]
    fn stages_only_move_forward() {
        let k = KeyMaterial::sifted(BitString::parse("1011").unwrap(), 0.05);
        let r = k
            .clone()
            .advance(KeyStage::Reconciled, BitString::parse("1010").unwrap(), 7)
            .unwrap();
        assert!(matches!(
            r.clone().advance(KeyStage::Sifted, BitString::new(), 0),
            Err(PostprocError::Stage { .. })
        ));
        assert!(r.clone().advance(KeyStage::Reconciled, BitString::new(), 0).is_err());
        let f = r.advance(KeyStage::Final, BitString::parse("10").unwrap(), 3).unwrap();
        assert_eq!(f.leaked_bits(), 10);
        assert_eq!(f.stage(), KeyStage::Final);
        assert!(k.advance(KeyStage::Final, BitString::new(), 0).is_ok());
    }

    #[test]
    fn key_file_round_trip() {
        let k = KeyMaterial::sifted(BitString::parse("1011001").unwrap(), 0.052)
            .advance(KeyStage::Final, BitString::parse("1011001").unwrap(), 12)
            .unwrap();
        let mut buf = Vec::new();
        k.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "# stage=final length=7 leaked=12 qber=0.052000 formula=floor(n*(1-2*h2(q)))-leak-eps\nb2\n"
        );
        assert_eq!(KeyMaterial::read_from(&buf[..]).unwrap(), k);
        assert!(KeyMaterial::read_from(&b"b2\n"[..]).is_err());
        assert!(KeyMaterial::read_from(&b"# stage=final length=9 leaked=0 qber=0\nb2\n"[..]).is_err());
    }
}
