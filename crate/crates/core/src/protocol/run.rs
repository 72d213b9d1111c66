use std::collections::HashMap;

use super::check::{bell_check, bell_correlations, estimate_qber, BellRecord, CheckReport, Thresholds, Verdict};
use super::party::PartyState;
use super::schedule::{BasisSchedule, CheckMode};
use super::sift::sift;
use super::{ProtocolError, Roles, SiftedKey};
use crate::adversary::AttackConfig;
use crate::channel::{Channel, Payload, ProtocolMessage, RoundRef};
use crate::quantum::{make_psi4_minus, NoiseModel, Party};
use crate::rng::{SeedTree, Stream};
use crate::source::{Resource, RoundRecord, SessionGenerator, SourceConfig};
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowBudget {
    Windows(u64),
    /// Measure until the key pool holds `bits` rounds, then keep exactly
    /// that many; fails after `max_windows`.
    TargetSiftedBits {
        bits: usize,
        max_windows: u64,
    },
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub roles: Roles,
    pub mode: CheckMode,
    pub source: SourceConfig,
    pub visibility: f64,
    pub attack: AttackConfig,
    pub budget: WindowBudget,
    pub thresholds: Thresholds,
    /// Fraction of the sifted key sacrificed for the QBER check.
    pub sample_fraction: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            roles: Roles::default(),
            mode: CheckMode::Qber,
            source: SourceConfig::default(),
            visibility: 1.0,
            attack: AttackConfig::none(),
            budget: WindowBudget::Windows(3600),
            thresholds: Thresholds::default(),
            sample_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionStats {
    pub windows: u64,
    pub detected_rounds: usize,
    pub key_pool: usize,
    pub bell_pool: usize,
}

#[derive(Debug)]
pub struct SessionResult {
    pub roles: Roles,
    /// Key pool right after sifting (before the check consumed its sample).
    pub sifted: SiftedKey,
    /// Key left after the check.
    pub key: SiftedKey,
    pub report: CheckReport,
    /// Per-combination correlations in Bell mode.
    pub bell_table: Option<[Estimate; 16]>,
    pub stats: SessionStats,
    pub channel: Channel,
}

/// Generates the session's rounds and runs the classical protocol on them.
pub fn run_protocol(config: &ProtocolConfig, seeds: &SeedTree) -> Result<SessionResult, ProtocolError> {
    let schedule = BasisSchedule::new(config.mode);
    let resource = Resource {
        state: make_psi4_minus(),
        noise: NoiseModel::new(config.visibility)?,
        attack: config.attack.clone(),
    };
    let mut generator = SessionGenerator::new(&config.source, schedule, resource, seeds)?;
    let mut detected = Vec::new();
    match config.budget {
        WindowBudget::Windows(n) => {
            for _ in 0..n {
                detected.extend(generator.next_window()?.into_iter().filter(RoundRecord::detected));
            }
        }
        WindowBudget::TargetSiftedBits { bits, max_windows } => {
            let mut pool = 0;
            while pool < bits {
                if generator.windows_elapsed() >= max_windows {
                    return Err(ProtocolError::InsufficientDetections {
                        needed: bits,
                        available: pool,
                    });
                }
                for r in generator.next_window()?.into_iter().filter(RoundRecord::detected) {
                    let lands_in_key = Party::ALL
                        .iter()
                        .all(|&p| !schedule.is_override(p, r.window_index) && r.bases[p.index()] == r.bases[0]);
                    pool += lands_in_key as usize;
                    detected.push(r);
                }
            }
        }
    }
    process_records(&detected, generator.windows_elapsed(), config, seeds)
}

/// Runs announcements, sifting and the scheduled check over logged records.
pub fn process_records(
    records: &[RoundRecord],
    windows: u64,
    config: &ProtocolConfig,
    seeds: &SeedTree,
) -> Result<SessionResult, ProtocolError> {
    let schedule = BasisSchedule::new(config.mode);
    let roles = config.roles;
    let dealer = roles.dealer();
    let channel = Channel::new();
    let mut parties = Party::ALL.map(|p| PartyState::from_records(p, roles, &schedule, records));

    for member in roles.access_set() {
        parties[member.index()].announce(&channel)?;
    }
    let announcements = parties[dealer.index()].collect_announcements(&channel);
    let mut outcome = sift(&announcements, config.mode)?;
    if let WindowBudget::TargetSiftedBits { bits, .. } = config.budget {
        outcome.key_rounds.truncate(bits);
    }
    let stats = SessionStats {
        windows,
        detected_rounds: announcements.len(),
        key_pool: outcome.key_rounds.len(),
        bell_pool: outcome.bell_rounds.len(),
    };
    parties[dealer.index()].broadcast_sift(outcome.clone(), &channel)?;
    for member in roles.access_set() {
        parties[member.index()].receive_sift(&channel);
    }
    let rows = parties
        .iter()
        .map(PartyState::sifted_row)
        .collect::<Result<Vec<_>, _>>()?;
    let sifted = SiftedKey::new(rows.try_into().expect("four rows"), outcome.key_rounds.clone());

    let (report, key, bell_table) = match config.mode {
        CheckMode::Qber => {
            let mut rng = seeds.stream(Stream::Sampling);
            let needed = (1.0 / config.sample_fraction).ceil() as usize;
            let (report, key) = match estimate_qber(
                &sifted,
                &roles,
                config.sample_fraction,
                &config.thresholds,
                &mut rng,
                &channel,
            ) {
                Err(ProtocolError::EmptySample) => {
                    return Err(ProtocolError::InsufficientDetections {
                        needed,
                        available: sifted.len(),
                    })
                }
                other => other?,
            };
            (report, key, None)
        }
        CheckMode::Bell => {
            let pool = exchange_bell_reveals(&parties, &announcements, &outcome.bell_rounds, &channel)?;
            let table = bell_correlations(&pool)?;
            (bell_check(&pool, &config.thresholds)?, sifted.clone(), Some(table))
        }
    };

    let aborted = report.verdict == Verdict::Abort;
    if aborted {
        channel.broadcast(ProtocolMessage::new(
            dealer,
            RoundRef::None,
            Payload::Abort {
                reason: format!("check failed: {report}"),
            },
        ))?;
        for member in roles.access_set() {
            while channel.recv_from(member, dealer).is_some() {}
        }
    }
    let result = SessionResult {
        roles,
        sifted,
        key,
        report,
        bell_table,
        stats,
        channel,
    };
    if aborted {
        Err(ProtocolError::Aborted(Box::new(result)))
    } else {
        Ok(result)
    }
}

/// Every party broadcasts its Bell-pool bits; the dealer pairs them with the
/// announced settings.
fn exchange_bell_reveals(
    parties: &[PartyState; 4],
    announcements: &[super::sift::RoundAnnouncements],
    bell_rounds: &[u64],
    channel: &Channel,
) -> Result<Vec<BellRecord>, ProtocolError> {
    for p in parties {
        p.reveal_bell(channel)?;
    }
    let dealer = parties.iter().find(|p| p.is_dealer()).expect("one dealer").id();
    let mut outcomes: HashMap<u64, u8> = bell_rounds.iter().map(|&r| (r, 0)).collect();
    let mut add = |rounds: &[u64], bits: &crate::bits::BitString, party: Party| {
        for (r, b) in rounds.iter().zip(bits.iter()) {
            if let Some(o) = outcomes.get_mut(r) {
                *o |= b << party.shift();
            }
        }
    };
    for sender in Party::ALL {
        // every recipient drains its copy; the dealer's copy is used
        for recipient in Party::ALL.into_iter().filter(|&r| r != sender) {
            let Some(Payload::BellReveal { rounds, bits }) = channel.recv_from(recipient, sender).map(|m| m.payload)
            else {
                unreachable!("{recipient} expected a Bell reveal from {sender}");
            };
            if recipient == dealer {
                add(&rounds, &bits, sender);
            }
        }
    }
    // the dealer's own bits never cross the channel to herself
    let own = &parties[dealer.index()];
    let own_bits = own.bell_bits(bell_rounds)?;
    add(bell_rounds, &own_bits, dealer);

    let by_round: HashMap<u64, &super::sift::RoundAnnouncements> = announcements.iter().map(|a| (a.round, a)).collect();
    Ok(bell_rounds
        .iter()
        .map(|r| {
            let a = by_round[r];
            BellRecord {
                round: *r,
                settings: a.bases.map(|b| b.map_or(0, |c| c.index)),
                outcome: outcomes[r],
            }
        })
        .collect())
}
