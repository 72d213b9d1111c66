//! Simulator and protocol engine for entanglement-based four-party quantum
//! secret sharing.
//!
//! The crate is layered bottom-up:
//!
//! * [`quantum`]: the four-photon state, analyzer measurements, the
//!   correlation function and the four-party Bell quantity.
//! * [`source`]: Poisson photon source with fixed acquisition windows.
//! * [`adversary`]: intercept-resend eavesdropping on the quantum layer.
//! * [`channel`]: authenticated classical message layer and wire format.
//! * [`protocol`]: party state machines, sifting, eavesdropping checks and
//!   access-set reconstruction.
//! * [`postproc`]: reconciliation, privacy amplification and the one-time pad.
//! * [`session`]: the whole pipeline from photons to a transmitted secret.

pub mod adversary;
pub mod bits;
pub mod channel;
pub mod postproc;
pub mod protocol;
pub mod quantum;
pub mod rng;
pub mod session;
pub mod source;
pub mod stats;

pub use bits::BitString;
pub use quantum::Party;
pub use rng::{SeedTree, Stream};
