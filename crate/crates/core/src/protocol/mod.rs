//! The four-party protocol: announcements, sifting, eavesdropping checks and
//! key reconstruction by the access set.

pub mod access;
pub mod check;
pub mod party;
pub mod run;
pub mod schedule;
pub mod sift;

use serde::Serialize;
use thiserror::Error;

use crate::bits::BitString;
use crate::channel::ChannelError;
use crate::quantum::{Party, QuantumError};
use crate::source::SourceError;

pub use access::{reconstruct_dealer_bit, semi_access_predictor};
pub use check::{bell_check, estimate_qber, BellRecord, CheckKind, CheckReport, Thresholds, Verdict};
pub use party::PartyState;
pub use run::{process_records, run_protocol, ProtocolConfig, SessionResult, SessionStats, WindowBudget};
pub use schedule::{BasisChoice, BasisSchedule, CheckMode};
pub use sift::{sift, RoundAnnouncements, SiftOutcome};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("round {round}: no basis announcement from {party}")]
    MissingAnnouncement { round: u64, party: Party },
    #[error("not enough detections: needed {needed}, got {available}")]
    InsufficientDetections { needed: usize, available: usize },
    #[error("Bell pool has no records for setting combination {0:04b}")]
    MissingSetting(usize),
    #[error("sample fraction {0} must lie strictly between 0 and 1")]
    SampleFraction(f64),
    #[error("check sample is empty")]
    EmptySample,
    #[error("invalid subset for partial prediction: {0}")]
    Subset(String),
    #[error("session aborted: {}", .0.report)]
    Aborted(Box<SessionResult>),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Dealer assignment; every other party is in the access set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Roles {
    dealer: Party,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartyRole {
    pub id: Party,
    pub is_dealer: bool,
}

impl Roles {
    pub fn new(dealer: Party) -> Self {
        Self { dealer }
    }

    pub fn dealer(&self) -> Party {
        self.dealer
    }

    pub fn access_set(&self) -> [Party; 3] {
        let mut out = [Party::Alice; 3];
        let mut i = 0;
        for p in Party::ALL {
            if p != self.dealer {
                out[i] = p;
                i += 1;
            }
        }
        out
    }

    /// Speaks for the access set in two-party post-processing.
    pub fn access_representative(&self) -> Party {
        self.access_set()[0]
    }

    pub fn roles(&self) -> [PartyRole; 4] {
        Party::ALL.map(|id| PartyRole {
            id,
            is_dealer: id == self.dealer,
        })
    }
}

impl Default for Roles {
    fn default() -> Self {
        Self::new(Party::Alice)
    }
}

/// Aligned per-party key rows after sifting.
#[derive(Debug, Clone, PartialEq)]
pub struct SiftedKey {
    rows: [BitString; 4],
    rounds: Vec<u64>,
}

impl SiftedKey {
    /// Rows must have equal length and `rounds` must be strictly increasing.
    pub fn new(rows: [BitString; 4], rounds: Vec<u64>) -> Self {
        assert!(rows.iter().all(|r| r.len() == rounds.len()), "misaligned key rows");
        assert!(rounds.windows(2).all(|w| w[0] < w[1]), "round indices must increase");
        Self { rows, rounds }
    }

    pub fn empty() -> Self {
        Self::new(Default::default(), Vec::new())
    }

    pub fn row(&self, party: Party) -> &BitString {
        &self.rows[party.index()]
    }

    pub fn rounds(&self) -> &[u64] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// XOR of the access set's rows.
    pub fn access_xor(&self, roles: &Roles) -> BitString {
        let [x, y, z] = roles.access_set().map(|p| self.row(p));
        (0..self.len())
            .map(|i| reconstruct_dealer_bit(x[i], y[i], z[i]))
            .collect()
    }

    /// Positions where the access set's reconstruction disagrees with the dealer.
    pub fn error_count(&self, roles: &Roles) -> usize {
        self.row(roles.dealer()).hamming_distance(&self.access_xor(roles))
    }

    /// Drops the given sorted positions from every row.
    pub fn without_positions(&self, positions: &[usize]) -> SiftedKey {
        let rows = std::array::from_fn(|m| self.rows[m].without_indices(positions));
        let mut drop = positions.iter().peekable();
        let rounds = self
            .rounds
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                if drop.peek() == Some(&i) {
                    drop.next();
                    false
                } else {
                    true
                }
            })
            .map(|(_, &r)| r)
            .collect();
        SiftedKey { rows, rounds }
    }

    pub fn truncated(&self, len: usize) -> SiftedKey {
        let len = len.min(self.len());
        SiftedKey {
            rows: std::array::from_fn(|m| self.rows[m].slice(0, len)),
            rounds: self.rounds[..len].to_vec(),
        }
    }

    /// Aligned rows `x_A`..`x_D` plus the access-set XOR row, in blocks of
    /// `block` bits. Positions where the XOR row disagrees with the dealer
    /// are marked with `^` underneath.
    pub fn render_transcript(&self, roles: &Roles, block: usize) -> String {
        let xor = self.access_xor(roles);
        let dealer = self.row(roles.dealer());
        let label_xor = format!("x_{}S", roles.dealer().letter());
        let mut out = String::new();
        let mut start = 0;
        while start < self.len() || (start == 0 && self.is_empty()) {
            let end = (start + block).min(self.len());
            out.push_str(&format!("# bits {}..{}\n", start, end));
            for p in Party::ALL {
                out.push_str(&format!("x_{:<3} {}\n", p.letter(), self.row(p).slice(start, end)));
            }
            out.push_str(&format!("{:<5} {}\n", label_xor, xor.slice(start, end)));
            let marks: String = (start..end)
                .map(|i| if xor[i] != dealer[i] { '^' } else { ' ' })
                .collect();
            out.push_str(&format!("{:<5} {}\n", "err", marks.trim_end()));
            out.push('\n');
            if self.is_empty() {
                break;
            }
            start = end;
        }
        out
    }
}
