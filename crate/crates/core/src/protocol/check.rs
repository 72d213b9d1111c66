use std::fmt;

use rand::Rng;
use serde::Serialize;

use super::{ProtocolError, Roles, SiftedKey};
use crate::bits::BitString;
use crate::channel::{Channel, Payload, ProtocolMessage, RoundRef};
use crate::quantum::{bell_s_from_table, bell_s_gradient, parity, N_PATTERNS};
use crate::stats::{proportion, signed_mean, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Abort when the sampled QBER exceeds this.
    pub max_qber: f64,
    /// Classical bound on the Bell quantity.
    pub bell_bound: f64,
    /// Proceed only if S exceeds the bound by this many standard errors.
    pub bell_sigmas: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_qber: 0.11,
            bell_bound: 1.0,
            bell_sigmas: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckKind {
    Qber,
    Bell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Proceed,
    Abort,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Proceed => "proceed",
            Verdict::Abort => "abort",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub kind: CheckKind,
    pub sample_size: usize,
    pub estimate: f64,
    pub std_err: f64,
    /// Effective threshold the estimate was compared against.
    pub threshold: f64,
    pub verdict: Verdict,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (what, cmp) = match self.kind {
            CheckKind::Qber => ("QBER", "<="),
            CheckKind::Bell => ("S", ">"),
        };
        write!(
            f,
            "{what} = {:.4} ± {:.4} over {} samples (proceed iff {what} {cmp} {:.4}): {}",
            self.estimate, self.std_err, self.sample_size, self.threshold, self.verdict
        )
    }
}

/// Dealer samples a fraction of the sifted positions, the access set reveals
/// its bits there, and the sampled positions are removed from the key.
pub fn estimate_qber<R: Rng + ?Sized>(
    sifted: &SiftedKey,
    roles: &Roles,
    sample_fraction: f64,
    thresholds: &Thresholds,
    rng: &mut R,
    channel: &Channel,
) -> Result<(CheckReport, SiftedKey), ProtocolError> {
    if !(sample_fraction > 0.0 && sample_fraction < 1.0) {
        return Err(ProtocolError::SampleFraction(sample_fraction));
    }
    let n = sifted.len();
    let k = (sample_fraction * n as f64).round() as usize;
    if k == 0 {
        return Err(ProtocolError::EmptySample);
    }
    let dealer = roles.dealer();
    let mut positions = rand::seq::index::sample(rng, n, k).into_vec();
    positions.sort_unstable();
    let span = RoundRef::Range {
        start: 0,
        end: n as u64,
    };
    channel.broadcast(ProtocolMessage::new(
        dealer,
        span,
        Payload::SampleRequest {
            positions: positions.clone(),
        },
    ))?;

    for member in roles.access_set() {
        let requested = match channel.recv_from(member, dealer).map(|m| m.payload) {
            Some(Payload::SampleRequest { positions }) => positions,
            other => unreachable!("{member} expected a sample request, got {other:?}"),
        };
        let row = sifted.row(member);
        let bits: BitString = requested.iter().map(|&i| row[i]).collect();
        channel.send(
            ProtocolMessage::new(
                member,
                span,
                Payload::SampleReveal {
                    positions: requested,
                    bits,
                },
            ),
            dealer,
        )?;
    }

    let mut combined = BitString::zeros(k);
    for member in roles.access_set() {
        let Some(Payload::SampleReveal { bits, .. }) = channel.recv_from(dealer, member).map(|m| m.payload) else {
            unreachable!("dealer expected a sample reveal from {member}");
        };
        combined = &combined ^ &bits;
    }
    let dealer_row = sifted.row(dealer);
    let errors = positions
        .iter()
        .zip(combined.iter())
        .filter(|(&i, b)| dealer_row[i] != *b)
        .count();
    let est = proportion(errors as u64, k as u64);
    let verdict = if est.value <= thresholds.max_qber {
        Verdict::Proceed
    } else {
        Verdict::Abort
    };
    let report = CheckReport {
        kind: CheckKind::Qber,
        sample_size: k,
        estimate: est.value,
        std_err: est.std_err,
        threshold: thresholds.max_qber,
        verdict,
    };
    Ok((report, sifted.without_positions(&positions)))
}

/// One Bell-pool round: each party's setting index (0 → first phase of its
/// pair) and the four-bit outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BellRecord {
    pub round: u64,
    pub settings: [u8; 4],
    pub outcome: u8,
}

impl BellRecord {
    /// Setting combination packed like an outcome pattern.
    pub fn combination(&self) -> usize {
        self.settings
            .iter()
            .fold(0usize, |acc, &k| (acc << 1) | (k as usize & 1))
    }
}

/// Per-combination correlation estimates (unweighted means per setting).
pub fn bell_correlations(pool: &[BellRecord]) -> Result<[Estimate; N_PATTERNS], ProtocolError> {
    let mut sums = [0i64; N_PATTERNS];
    let mut counts = [0u64; N_PATTERNS];
    for r in pool {
        let c = r.combination();
        counts[c] += 1;
        sums[c] += if parity(r.outcome as usize) == 0 { 1 } else { -1 };
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(ProtocolError::MissingSetting(missing));
    }
    Ok(std::array::from_fn(|c| signed_mean(sums[c], counts[c])))
}

/// S with its delta-method standard error.
pub fn bell_estimate(table: &[Estimate; N_PATTERNS]) -> Estimate {
    let values = table.map(|e| e.value);
    let grad = bell_s_gradient(&values);
    let var: f64 = grad.iter().zip(table).map(|(g, e)| g * g * e.std_err * e.std_err).sum();
    Estimate::new(bell_s_from_table(&values), var.sqrt())
}

pub fn bell_check(pool: &[BellRecord], thresholds: &Thresholds) -> Result<CheckReport, ProtocolError> {
    let s = bell_estimate(&bell_correlations(pool)?);
    let threshold = thresholds.bell_bound + thresholds.bell_sigmas * s.std_err;
    Ok(CheckReport {
        kind: CheckKind::Bell,
        sample_size: pool.len(),
        estimate: s.value,
        std_err: s.std_err,
        threshold,
        verdict: if s.value > threshold {
            Verdict::Proceed
        } else {
            Verdict::Abort
        },
    })
}
