//! Seeded random streams.
//!
//! Every consumer of randomness (each party's basis choices, the photon
//! source, the eavesdropper, the dealer's sampling, ...) draws from its own
//! ChaCha8 stream derived from one master seed, so any one stream can be
//! reproduced without replaying the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::quantum::Party;

/// Identifies one independent stream under a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Bases(Party),
    Source,
    Adversary,
    Sampling,
    Reconciliation,
    Hashing,
    Message,
    /// Free-form streams for experiments that are not part of the protocol.
    Aux(u32),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Bases(p) => p.index() as u64,
            Stream::Source => 16,
            Stream::Adversary => 17,
            Stream::Sampling => 18,
            Stream::Reconciliation => 19,
            Stream::Hashing => 20,
            Stream::Message => 21,
            Stream::Aux(n) => 1024 + n as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(stream.id());
        rng
    }

    /// A child tree, e.g. for the i-th trial of a Monte Carlo batch.
    pub fn child(&self, index: u64) -> SeedTree {
        // splitmix64 finalizer keeps children decorrelated from the parent
        let mut z = self
            .master
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        SeedTree::new(z ^ (z >> 31))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let t = SeedTree::new(7);
        let a: Vec<u64> = (0..4).map(|_| t.stream(Stream::Source).random()).collect();
        let mut s = t.stream(Stream::Source);
        let b: Vec<u64> = (0..4).map(|_| s.random()).collect();
        assert_eq!(a[0], b[0]);
        let mut s1 = t.stream(Stream::Source);
        let mut s2 = t.stream(Stream::Adversary);
        assert_ne!(s1.random::<u64>(), s2.random::<u64>());
        assert_ne!(t.child(0), t.child(1));
    }
}
