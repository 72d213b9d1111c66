//! Privacy amplification by Toeplitz hashing over GF(2).

use rand::Rng;
use serde::Serialize;

use super::PostprocError;
use crate::bits::BitString;

/// Diagonals of an `n_out × n_in` Toeplitz matrix: entry `(i, j)` is
/// `bits[i + n_in - 1 - j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToeplitzSeed {
    n_in: usize,
    n_out: usize,
    bits: BitString,
}

impl ToeplitzSeed {
    pub fn new(n_in: usize, n_out: usize, bits: BitString) -> Result<Self, PostprocError> {
        let expected = Self::seed_len(n_in, n_out);
        if bits.len() != expected {
            return Err(PostprocError::SeedLength {
                expected,
                actual: bits.len(),
            });
        }
        Ok(Self { n_in, n_out, bits })
    }

    pub fn random<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bits = BitString::random(Self::seed_len(n_in, n_out), rng);
        Self { n_in, n_out, bits }
    }

    pub fn seed_len(n_in: usize, n_out: usize) -> usize {
        if n_out == 0 {
            0
        } else {
            n_in + n_out - 1
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn entry(&self, i: usize, j: usize) -> u8 {
        self.bits[i + self.n_in - 1 - j]
    }
}

fn pack<I: IntoIterator<Item = u8>>(bits: I, len: usize) -> Vec<u64> {
    // one spare word lets windows read past the end without bounds checks
    let mut words = vec![0u64; len.div_ceil(64) + 1];
    for (i, b) in bits.into_iter().enumerate() {
        words[i / 64] |= (b as u64) << (i % 64);
    }
    words
}

/// Compresses `key` to `n_out` bits with the Toeplitz matrix of `seed`.
pub fn privacy_amplify(key: &BitString, seed: &ToeplitzSeed, n_out: usize) -> Result<BitString, PostprocError> {
    if seed.n_in != key.len() || seed.n_out != n_out {
        return Err(PostprocError::Dimensions {
            key: key.len(),
            n_out,
            seed_in: seed.n_in,
            seed_out: seed.n_out,
        });
    }
    let n_in = key.len();
    // row i is the seed window [i, i + n_in) against the key read backwards
    let rev = pack(key.iter().rev(), n_in);
    let diag = pack(seed.bits.iter(), seed.bits.len());
    let words = n_in.div_ceil(64);
    Ok((0..n_out)
        .map(|i| {
            let acc = (0..words).fold(0u64, |acc, w| {
                let start = i + 64 * w;
                let (q, r) = (start / 64, start % 64);
                let window = if r == 0 {
                    diag[q]
                } else {
                    (diag[q] >> r) | (diag[q + 1] << (64 - r))
                };
                acc ^ (window & rev[w])
            });
            (acc.count_ones() & 1) as u8
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Plain matrix-vector product, written directly from the definition.
    fn naive(key: &BitString, seed: &ToeplitzSeed) -> BitString {
        (0..seed.n_out())
            .map(|i| (0..key.len()).fold(0, |acc, j| acc ^ (seed.entry(i, j) & key[j])))
            .collect()
    }

    #[test]
    fn hand_computed_example() {
        // seed s0..s10 = 1 0 1 1 0 0 1 0 1 1 1; rows (entry (i, j) = s[i + 7 - j]):
        //   i=0: s7..s0  = 0 1 0 0 1 1 0 1
        //   i=1: s8..s1  = 1 0 1 0 0 1 1 0
        //   i=2: s9..s2  = 1 1 0 1 0 0 1 1
        //   i=3: s10..s3 = 1 1 1 0 1 0 0 1
        // key 1 1 0 1 0 0 1 1; row AND key has 2, 2, 5, 3 ones → 0 0 1 1
        let seed = ToeplitzSeed::new(8, 4, BitString::parse("10110010111").unwrap()).unwrap();
        let key = BitString::parse("11010011").unwrap();
        let out = privacy_amplify(&key, &seed, 4).unwrap();
        assert_eq!(out, BitString::parse("0011").unwrap());
        assert_eq!(out, naive(&key, &seed));
    }

    #[test]
    fn zero_key_maps_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seed = ToeplitzSeed::random(300, 77, &mut rng);
        assert_eq!(
            privacy_amplify(&BitString::zeros(300), &seed, 77).unwrap(),
            BitString::zeros(77)
        );
    }

    #[test]
    fn dimension_checks() {
        assert!(matches!(
            ToeplitzSeed::new(8, 4, BitString::zeros(10)),
            Err(PostprocError::SeedLength {
                expected: 11,
                actual: 10
            })
        ));
        let seed = ToeplitzSeed::new(8, 4, BitString::zeros(11)).unwrap();
        assert!(privacy_amplify(&BitString::zeros(9), &seed, 4).is_err());
        assert!(privacy_amplify(&BitString::zeros(8), &seed, 3).is_err());
        let empty = ToeplitzSeed::new(8, 0, BitString::new()).unwrap();
        assert!(privacy_amplify(&BitString::zeros(8), &empty, 0).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn matches_naive_product(n_in in 1usize..300, n_out in 1usize..200, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = ToeplitzSeed::random(n_in, n_out, &mut rng);
            let key = BitString::random(n_in, &mut rng);
            prop_assert_eq!(privacy_amplify(&key, &t, n_out).unwrap(), naive(&key, &t));
        }

        #[test]
        fn is_linear(n_in in 1usize..500, n_out in 1usize..300, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = ToeplitzSeed::random(n_in, n_out, &mut rng);
            let k1 = BitString::random(n_in, &mut rng);
            let k2 = BitString::random(n_in, &mut rng);
            let lhs = privacy_amplify(&(&k1 ^ &k2), &t, n_out).unwrap();
            let rhs = &privacy_amplify(&k1, &t, n_out).unwrap() ^ &privacy_amplify(&k2, &t, n_out).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
