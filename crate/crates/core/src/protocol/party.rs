use std::collections::BTreeMap;

use super::schedule::{BasisChoice, BasisSchedule};
use super::sift::{RoundAnnouncements, SiftOutcome};
use super::{ProtocolError, Roles};
use crate::bits::BitString;
use crate::channel::{BasisEntry, Channel, Payload, ProtocolMessage, RoundRef};
use crate::quantum::Party;
use crate::source::RoundRecord;

fn blank(round: u64, window: u64) -> RoundAnnouncements {
    RoundAnnouncements {
        round,
        window,
        bases: [None; 4],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LocalRound {
    window: u64,
    basis: BasisChoice,
    bit: u8,
}

/// One party's private view: its own detections, bases and outcome bits.
#[derive(Debug, Clone)]
pub struct PartyState {
    id: Party,
    roles: Roles,
    detections: BTreeMap<u64, LocalRound>,
    sift: Option<SiftOutcome>,
}

impl PartyState {
    /// Extracts this party's local log from the shared session records.
    pub fn from_records(id: Party, roles: Roles, schedule: &BasisSchedule, records: &[RoundRecord]) -> Self {
        let detections = records
            .iter()
            .filter_map(|r| {
                let bit = r.bit(id)?;
                let index = r.bases[id.index()];
                Some((
                    r.round_index,
                    LocalRound {
                        window: r.window_index,
                        basis: schedule.choice(id, r.window_index, index),
                        bit,
                    },
                ))
            })
            .collect();
        Self {
            id,
            roles,
            detections,
            sift: None,
        }
    }

    pub fn id(&self) -> Party {
        self.id
    }

    pub fn is_dealer(&self) -> bool {
        self.roles.dealer() == self.id
    }

    pub fn detected_rounds(&self) -> usize {
        self.detections.len()
    }

    fn span(&self) -> RoundRef {
        match (self.detections.keys().next(), self.detections.keys().next_back()) {
            (Some(&start), Some(&end)) => RoundRef::Range { start, end: end + 1 },
            _ => RoundRef::None,
        }
    }

    /// Detection and basis announcements (never outcome bits) to the dealer.
    pub fn announce(&self, channel: &Channel) -> Result<(), ProtocolError> {
        let dealer = self.roles.dealer();
        let rounds: Vec<u64> = self.detections.keys().copied().collect();
        channel.send(
            ProtocolMessage::new(self.id, self.span(), Payload::DetectionAnnouncement { rounds }),
            dealer,
        )?;
        let entries = self
            .detections
            .iter()
            .map(|(&round, l)| BasisEntry {
                round,
                window: l.window,
                basis: l.basis.index,
                overridden: l.basis.overridden,
            })
            .collect();
        channel.send(
            ProtocolMessage::new(self.id, self.span(), Payload::BasisAnnouncement { entries }),
            dealer,
        )?;
        Ok(())
    }

    /// Dealer side: gathers every announcement into per-round records.
    pub fn collect_announcements(&self, channel: &Channel) -> Vec<RoundAnnouncements> {
        let mut table: BTreeMap<u64, RoundAnnouncements> = BTreeMap::new();
        for (&round, l) in &self.detections {
            table.entry(round).or_insert_with(|| blank(round, l.window)).bases[self.id.index()] = Some(l.basis);
        }
        for member in self.roles.access_set() {
            while let Some(msg) = channel.recv_from(self.id, member) {
                match msg.payload {
                    Payload::DetectionAnnouncement { rounds } => {
                        for r in rounds {
                            table.entry(r).or_insert_with(|| blank(r, r));
                        }
                    }
                    Payload::BasisAnnouncement { entries } => {
                        for e in entries {
                            let slot = table.entry(e.round).or_insert_with(|| blank(e.round, e.window));
                            slot.window = e.window;
                            slot.bases[member.index()] = Some(BasisChoice {
                                index: e.basis,
                                overridden: e.overridden,
                            });
                        }
                    }
                    other => unreachable!("unexpected {} during announcements", other.type_name()),
                }
            }
        }
        table.into_values().collect()
    }

    pub fn broadcast_sift(&mut self, outcome: SiftOutcome, channel: &Channel) -> Result<(), ProtocolError> {
        channel.broadcast(ProtocolMessage::new(
            self.id,
            RoundRef::None,
            Payload::SiftDecision {
                key_rounds: outcome.key_rounds.clone(),
                bell_rounds: outcome.bell_rounds.clone(),
            },
        ))?;
        self.sift = Some(outcome);
        Ok(())
    }

    pub fn receive_sift(&mut self, channel: &Channel) {
        match channel.recv_from(self.id, self.roles.dealer()).map(|m| m.payload) {
            Some(Payload::SiftDecision {
                key_rounds,
                bell_rounds,
            }) => {
                self.sift = Some(SiftOutcome {
                    key_rounds,
                    bell_rounds,
                })
            }
            other => unreachable!("{} expected a sift decision, got {other:?}", self.id),
        }
    }

    fn bits_at(&self, rounds: &[u64]) -> Result<BitString, ProtocolError> {
        rounds
            .iter()
            .map(|r| {
                self.detections
                    .get(r)
                    .map(|l| l.bit)
                    .ok_or(ProtocolError::MissingAnnouncement {
                        round: *r,
                        party: self.id,
                    })
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(BitString::from)
    }

    pub fn sifted_row(&self) -> Result<BitString, ProtocolError> {
        self.bits_at(&self.sift.as_ref().map(|s| s.key_rounds.clone()).unwrap_or_default())
    }

    pub fn bell_bits(&self, rounds: &[u64]) -> Result<BitString, ProtocolError> {
        self.bits_at(rounds)
    }

    /// Everyone publishes their Bell-pool outcomes.
    pub fn reveal_bell(&self, channel: &Channel) -> Result<(), ProtocolError> {
        let rounds = self.sift.as_ref().map(|s| s.bell_rounds.clone()).unwrap_or_default();
        let bits = self.bits_at(&rounds)?;
        channel.broadcast(ProtocolMessage::new(
            self.id,
            self.span(),
            Payload::BellReveal { rounds, bits },
        ))?;
        Ok(())
    }
}
