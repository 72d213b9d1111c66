//! Cascade-style interactive error reconciliation between the dealer and the
//! access set (acting as one logical party).
//!
//! The access set asks for parities of ranges in a pass's permuted order; the
//! dealer answers from its own key. Every answered parity bit is leakage.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::PostprocError;
use crate::bits::BitString;
use crate::channel::{Channel, ParityKind, Payload, ProtocolMessage, RoundRef};
use crate::protocol::Roles;
use crate::quantum::Party;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockConfig {
    /// QBER used to size the first-pass blocks.
    pub qber: f64,
    /// First-pass block size is `ceil(block_factor / qber)`.
    pub block_factor: f64,
    /// Block-parity passes, each doubling the previous block size.
    pub passes: u32,
    /// Random-subset parities compared at the end; a residual difference
    /// survives them with probability `2^-verify_parities`.
    pub verify_parities: u32,
    /// Verification requests allowed. Each mismatching subset locates one
    /// error, which is cascaded through the passes; the subset is then
    /// replaced by a fresh one in the next request.
    pub max_verifications: u32,
}

impl BlockConfig {
    pub fn new(qber: f64) -> Self {
        Self {
            qber,
            block_factor: 0.73,
            passes: 2,
            verify_parities: 20,
            max_verifications: 8,
        }
    }

    pub fn block_size(&self, pass: u32, n: usize) -> usize {
        let first = if self.qber > 0.0 {
            (self.block_factor / self.qber).ceil().max(1.0)
        } else {
            f64::INFINITY
        };
        let size = first * 2f64.powi(pass.saturating_sub(1) as i32);
        if size >= n as f64 {
            n.max(1)
        } else {
            size as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconcileReport {
    pub block_sizes: Vec<usize>,
    /// Parity bits disclosed by the dealer, verification included.
    pub leaked_bits: u64,
    /// Positions flipped in the access set's key.
    pub corrected: usize,
    pub verification_rounds: u32,
}

#[derive(Debug, Clone)]
pub struct Reconciled {
    pub dealer: BitString,
    pub access: BitString,
    pub report: ReconcileReport,
}

/// Order of key positions used by a pass: identity for the first pass, a
/// seeded shuffle afterwards.
pub fn pass_order(n: usize, pass: u32, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if pass > 1 {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
}

/// Membership of every position in the `index`-th verification subset.
pub fn verify_subset(n: usize, seed: u64, index: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..n).filter(|_| rng.random::<bool>()).collect()
}

/// A verification subset with the dealer's parity over it.
#[derive(Debug, Clone, Copy)]
struct Check {
    seed: u64,
    index: u32,
    parity: u8,
}

/// Dealer end: answers parity requests from its own key.
struct Responder<'a> {
    id: Party,
    key: &'a BitString,
    orders: HashMap<u32, Vec<usize>>,
    subsets: HashMap<(u64, u32), Vec<usize>>,
}

impl Responder<'_> {
    fn answer(&mut self, kind: ParityKind, pass: u32, seed: u64, ranges: &[(usize, usize)]) -> BitString {
        let n = self.key.len();
        match kind {
            ParityKind::Block => {
                let order = self.orders.entry(pass).or_insert_with(|| pass_order(n, pass, seed));
                ranges
                    .iter()
                    .map(|&(s, e)| self.key.parity_of(order[s..e].iter().copied()))
                    .collect()
            }
            ParityKind::Verify => ranges
                .iter()
                .map(|&(index, len)| self.key.parity_of(verify_subset(len, seed, index)))
                .collect(),
            ParityKind::Subset => {
                let members = self
                    .subsets
                    .entry((seed, pass))
                    .or_insert_with(|| verify_subset(n, seed, pass as usize));
                ranges
                    .iter()
                    .map(|&(s, e)| self.key.parity_of(members[s..e].iter().copied()))
                    .collect()
            }
        }
    }
}

struct PassState {
    seed: u64,
    order: Vec<usize>,
    /// Position of each key index within `order`.
    slot: Vec<usize>,
    block: usize,
    dealer: Vec<u8>,
    own: Vec<u8>,
    /// Dealer parities of ranges already disclosed or implied, reused when
    /// a later flip sends the search back into this pass.
    known: HashMap<(usize, usize), u8>,
}

impl PassState {
    fn blocks(&self) -> usize {
        self.dealer.len()
    }

    fn range(&self, b: usize) -> (usize, usize) {
        (b * self.block, ((b + 1) * self.block).min(self.order.len()))
    }

    fn odd_blocks(&self) -> Vec<usize> {
        (0..self.blocks()).filter(|&b| self.own[b] != self.dealer[b]).collect()
    }
}

/// Access end: holds the combined key and drives the exchange.
struct Cascade<'a> {
    roles: Roles,
    channel: &'a Channel,
    responder: Responder<'a>,
    key: BitString,
    passes: Vec<PassState>,
    leaked: u64,
    corrected: usize,
}

impl Cascade<'_> {
    fn me(&self) -> Party {
        self.roles.access_representative()
    }

    fn ask(
        &mut self,
        kind: ParityKind,
        pass: u32,
        seed: u64,
        ranges: Vec<(usize, usize)>,
    ) -> Result<BitString, PostprocError> {
        if ranges.is_empty() {
            return Ok(BitString::new());
        }
        let me = self.me();
        let dealer = self.responder.id;
        let request = Payload::ParityExchange {
            kind,
            pass,
            seed,
            ranges,
            bits: BitString::new(),
        };
        self.channel
            .send(ProtocolMessage::new(me, RoundRef::None, request), dealer)?;

        let Some(Payload::ParityExchange {
            kind,
            pass,
            seed,
            ranges,
            ..
        }) = self.channel.recv_from(dealer, me).map(|m| m.payload)
        else {
            unreachable!("dealer expected a parity request");
        };
        let bits = self.responder.answer(kind, pass, seed, &ranges);
        let reply = Payload::ParityExchange {
            kind,
            pass,
            seed,
            ranges,
            bits,
        };
        self.channel
            .send(ProtocolMessage::new(dealer, RoundRef::None, reply), me)?;

        match self.channel.recv_from(me, dealer).map(|m| m.payload) {
            Some(Payload::ParityExchange { bits, .. }) => {
                self.leaked += bits.len() as u64;
                Ok(bits)
            }
            other => unreachable!("expected a parity reply, got {other:?}"),
        }
    }

    fn start_pass(&mut self, pass: u32, block: usize, seed: u64) -> Result<(), PostprocError> {
        let n = self.key.len();
        let order = pass_order(n, pass, seed);
        let mut slot = vec![0; n];
        for (s, &i) in order.iter().enumerate() {
            slot[i] = s;
        }
        let blocks = n.div_ceil(block);
        let ranges: Vec<(usize, usize)> = (0..blocks).map(|b| (b * block, ((b + 1) * block).min(n))).collect();
        let own = ranges
            .iter()
            .map(|&(s, e)| self.key.parity_of(order[s..e].iter().copied()))
            .collect();
        // once the first pass is known, the whole key's parity is too, so the
        // last block of later passes costs nothing
        let dealer = match self.passes.first() {
            Some(first) => {
                let total = first.dealer.iter().fold(0, |acc, b| acc ^ b);
                let mut bits = self.ask(ParityKind::Block, pass, seed, ranges[..blocks - 1].to_vec())?;
                bits.push(bits.iter().fold(total, |acc, b| acc ^ b));
                bits
            }
            None => self.ask(ParityKind::Block, pass, seed, ranges.clone())?,
        };
        self.passes.push(PassState {
            seed,
            order,
            slot,
            block,
            dealer: dealer.iter().collect(),
            own,
            known: ranges.into_iter().zip(dealer.iter()).collect(),
        });
        Ok(())
    }

    fn flip(&mut self, index: usize) {
        self.key.flip(index);
        self.corrected += 1;
        for p in &mut self.passes {
            p.own[p.slot[index] / p.block] ^= 1;
        }
    }

    /// Binary search, in lockstep, inside disjoint odd-parity ranges of one
    /// pass; returns the key index of one error per range.
    fn bisect(&mut self, pass: usize, mut ranges: Vec<(usize, usize)>) -> Result<Vec<usize>, PostprocError> {
        let seed = self.passes[pass].seed;
        while ranges.iter().any(|&(s, e)| e - s > 1) {
            let open: Vec<usize> = (0..ranges.len()).filter(|&r| ranges[r].1 - ranges[r].0 > 1).collect();
            let halves: Vec<(usize, usize)> = open
                .iter()
                .map(|&r| {
                    let (s, e) = ranges[r];
                    (s, s + (e - s) / 2)
                })
                .collect();
            let missing: Vec<(usize, usize)> = halves
                .iter()
                .copied()
                .filter(|h| !self.passes[pass].known.contains_key(h))
                .collect();
            if !missing.is_empty() {
                let theirs = self.ask(ParityKind::Block, pass as u32 + 1, seed, missing.clone())?;
                self.passes[pass].known.extend(missing.into_iter().zip(theirs.iter()));
            }
            let p = &mut self.passes[pass];
            for (&r, &(s, mid)) in open.iter().zip(&halves) {
                let e = ranges[r].1;
                let left = p.known[&(s, mid)];
                // every range under search has a known parity, so the right
                // half's follows from it for free
                let right = p.known[&(s, e)] ^ left;
                p.known.insert((mid, e), right);
                let mine = self.key.parity_of(p.order[s..mid].iter().copied());
                ranges[r] = if mine != left { (s, mid) } else { (mid, e) };
            }
        }
        let order = &self.passes[pass].order;
        Ok(ranges.iter().map(|&(s, _)| order[s]).collect())
    }

    /// Corrects odd blocks until every pass so far is parity-consistent,
    /// always working in the earliest pass that still has odd blocks.
    fn cascade(&mut self) -> Result<(), PostprocError> {
        while let Some(pass) = self.passes.iter().position(|p| !p.odd_blocks().is_empty()) {
            let p = &self.passes[pass];
            let ranges = p.odd_blocks().into_iter().map(|b| p.range(b)).collect();
            for index in self.bisect(pass, ranges)? {
                self.flip(index);
            }
        }
        Ok(())
    }

    /// Dealer parities of `count` fresh random subsets drawn from `seed`.
    fn verify(&mut self, count: usize, seed: u64) -> Result<Vec<Check>, PostprocError> {
        let n = self.key.len();
        let ranges: Vec<(usize, usize)> = (0..count).map(|i| (i, n)).collect();
        let theirs = self.ask(ParityKind::Verify, 0, seed, ranges)?;
        Ok(theirs
            .iter()
            .enumerate()
            .map(|(i, parity)| Check {
                seed,
                index: i as u32,
                parity,
            })
            .collect())
    }

    fn disagrees(&self, check: &Check) -> bool {
        self.key
            .parity_of(verify_subset(self.key.len(), check.seed, check.index as usize))
            != check.parity
    }

    /// Binary search over the members of a subset whose parity disagrees.
    fn locate_in_subset(&mut self, index: u32, seed: u64, parity: u8) -> Result<usize, PostprocError> {
        let members = verify_subset(self.key.len(), seed, index as usize);
        let (mut s, mut e, mut theirs) = (0, members.len(), parity);
        while e - s > 1 {
            let mid = s + (e - s) / 2;
            let left = self.ask(ParityKind::Subset, index, seed, vec![(s, mid)])?[0];
            if self.key.parity_of(members[s..mid].iter().copied()) != left {
                (e, theirs) = (mid, left);
            } else {
                (s, theirs) = (mid, theirs ^ left);
            }
        }
        debug_assert_ne!(self.key[members[s]], theirs);
        Ok(members[s])
    }
}

/// Reconciles the access set's combined key `x_B ⊕ x_C ⊕ x_D` (or whichever
/// parties form the access set) against the dealer's key over `channel`.
///
/// Parity replies travel as `ParityExchange` messages, so the returned
/// leakage equals the parity bits visible in the transcript.
pub fn reconcile<R: Rng + ?Sized>(
    dealer_key: &BitString,
    access_key: &BitString,
    roles: &Roles,
    channel: &Channel,
    config: &BlockConfig,
    rng: &mut R,
) -> Result<Reconciled, PostprocError> {
    if dealer_key.len() != access_key.len() {
        return Err(PostprocError::LengthMismatch(dealer_key.len(), access_key.len()));
    }
    if !(config.qber >= 0.0 && config.qber < 0.5) {
        return Err(PostprocError::Qber(config.qber));
    }
    let n = access_key.len();
    if n == 0 {
        return Ok(Reconciled {
            dealer: BitString::new(),
            access: BitString::new(),
            report: ReconcileReport {
                block_sizes: Vec::new(),
                leaked_bits: 0,
                corrected: 0,
                verification_rounds: 0,
            },
        });
    }
    let mut c = Cascade {
        roles: *roles,
        channel,
        responder: Responder {
            id: roles.dealer(),
            key: dealer_key,
            orders: HashMap::new(),
            subsets: HashMap::new(),
        },
        key: access_key.clone(),
        passes: Vec::new(),
        leaked: 0,
        corrected: 0,
    };
    for pass in 1..=config.passes {
        c.start_pass(pass, config.block_size(pass, n), rng.random())?;
        c.cascade()?;
    }
    // A subset is discarded once it has steered a correction; the others were
    // drawn independently of every correction made so far, so they remain
    // valid checks and only the discarded ones are replaced.
    let wanted = config.verify_parities as usize;
    let mut checks: Vec<Check> = Vec::new();
    let mut verification_rounds = 0;
    loop {
        if let Some(pos) = checks.iter().position(|ch| c.disagrees(ch)) {
            let check = checks.remove(pos);
            let error = c.locate_in_subset(check.index, check.seed, check.parity)?;
            c.flip(error);
            c.cascade()?;
            continue;
        }
        if checks.len() >= wanted {
            break;
        }
        if verification_rounds == config.max_verifications {
            return Err(PostprocError::NonConvergence {
                rounds: verification_rounds,
            });
        }
        verification_rounds += 1;
        let fresh = c.verify(wanted - checks.len(), rng.random())?;
        checks.extend(fresh);
    }
    let report = ReconcileReport {
        block_sizes: c.passes.iter().map(|p| p.block).collect(),
        leaked_bits: c.leaked,
        corrected: c.corrected,
        verification_rounds,
    };
    Ok(Reconciled {
        dealer: dealer_key.clone(),
        access: c.key,
        report,
    })
}
