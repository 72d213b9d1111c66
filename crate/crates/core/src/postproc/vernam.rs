//! One-time pad with strict single use of key bits.

use super::PostprocError;
use crate::bits::BitString;

/// XOR of `message` with the first `message.len()` bits of `key`.
pub fn xor_prefix(message: &BitString, key: &BitString) -> Result<BitString, PostprocError> {
    if key.len() < message.len() {
        return Err(PostprocError::KeyTooShort {
            needed: message.len(),
            available: key.len(),
        });
    }
    Ok(message.iter().zip(key.iter()).map(|(m, k)| m ^ k).collect())
}

/// A key whose bits are consumed front to back and never handed out twice.
/// Sender and receiver each hold a copy and consume it in the same order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneTimePad {
    key: BitString,
    spent: usize,
}

impl OneTimePad {
    pub fn new(key: BitString) -> Self {
        Self { key, spent: 0 }
    }

    pub fn spent(&self) -> usize {
        self.spent
    }

    pub fn remaining(&self) -> usize {
        self.key.len() - self.spent
    }

    fn take(&mut self, needed: usize) -> Result<BitString, PostprocError> {
        if needed > self.key.len() {
            return Err(PostprocError::KeyTooShort {
                needed,
                available: self.key.len(),
            });
        }
        if needed > self.remaining() {
            return Err(PostprocError::KeyReuse {
                needed,
                remaining: self.remaining(),
            });
        }
        let bits = self.key.slice(self.spent, self.spent + needed);
        self.spent += needed;
        Ok(bits)
    }

    pub fn encrypt(&mut self, message: &BitString) -> Result<BitString, PostprocError> {
        let k = self.take(message.len())?;
        xor_prefix(message, &k)
    }

    pub fn decrypt(&mut self, ciphertext: &BitString) -> Result<BitString, PostprocError> {
        self.encrypt(ciphertext)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bits(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    #[test]
    fn xor_example() {
        let mut pad = OneTimePad::new(bits("0110"));
        assert_eq!(pad.encrypt(&bits("1010")).unwrap(), bits("1100"));
        assert_eq!(pad.remaining(), 0);
    }

    #[test]
    fn round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let n = rng.random_range(0..200);
            let m = BitString::random(n, &mut rng);
            let k = BitString::random(n + rng.random_range(0..20), &mut rng);
            let c = OneTimePad::new(k.clone()).encrypt(&m).unwrap();
            assert_eq!(OneTimePad::new(k).decrypt(&c).unwrap(), m);
        }
    }

    #[test]
    fn spent_bits_are_refused() {
        let mut pad = OneTimePad::new(bits("01101"));
        pad.encrypt(&bits("1010")).unwrap();
        assert!(matches!(
            pad.encrypt(&bits("10")),
            Err(PostprocError::KeyReuse {
                needed: 2,
                remaining: 1
            })
        ));
        // a failed request consumes nothing
        assert_eq!(pad.encrypt(&bits("1")).unwrap(), bits("0"));
        assert!(matches!(pad.encrypt(&bits("1")), Err(PostprocError::KeyReuse { .. })));
    }

    #[test]
    fn short_key() {
        assert!(matches!(
            OneTimePad::new(bits("01")).encrypt(&bits("101")),
            Err(PostprocError::KeyTooShort {
                needed: 3,
                available: 2
            })
        ));
        assert!(xor_prefix(&bits("101"), &bits("01")).is_err());
    }
}
