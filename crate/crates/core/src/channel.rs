//! Authenticated classical channel between the four parties.
//!
//! Wire frame: a 4-byte big-endian payload length followed by a UTF-8 JSON
//! object `{"type", "sender", "round", "payload"}`.

use std::collections::VecDeque;
use std::io::{self, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bits::BitString;
use crate::quantum::Party;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("channel is closed")]
    Closed,
    #[error("party {0} cannot send to itself")]
    SelfSend(Party),
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("frame shorter than its 4-byte length prefix")]
    MissingPrefix,
    #[error("frame declares {declared} payload bytes but {actual} are present")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("malformed frame: {0}")]
    Malformed(String),
}

/// Round or bit-index range a message refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoundRef {
    Round(u64),
    Range { start: u64, end: u64 },
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisEntry {
    pub round: u64,
    pub window: u64,
    pub basis: u8,
    pub overridden: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityKind {
    /// Parities of contiguous ranges of a pass's permuted order.
    Block,
    /// Parities of random subsets used to confirm equality.
    Verify,
    /// Parities of ranges of one verification subset's members, used to
    /// locate an error that the subset exposed.
    Subset,
}

/// Message bodies. Only `SampleReveal`, `BellReveal` and `ParityExchange`
/// carry anything derived from measurement outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum Payload {
    BasisAnnouncement {
        entries: Vec<BasisEntry>,
    },
    DetectionAnnouncement {
        rounds: Vec<u64>,
    },
    SiftDecision {
        key_rounds: Vec<u64>,
        bell_rounds: Vec<u64>,
    },
    SampleRequest {
        positions: Vec<usize>,
    },
    SampleReveal {
        positions: Vec<usize>,
        bits: BitString,
    },
    BellReveal {
        rounds: Vec<u64>,
        bits: BitString,
    },
    ParityExchange {
        kind: ParityKind,
        pass: u32,
        /// Seed of the pass permutation or of the verification subsets.
        seed: u64,
        ranges: Vec<(usize, usize)>,
        /// Empty for a request, one bit per range (or subset) for a reply.
        bits: BitString,
    },
    HashSeed {
        n_in: usize,
        n_out: usize,
        seed: BitString,
    },
    Ciphertext {
        ciphertext: BitString,
    },
    Abort {
        reason: String,
    },
}

impl Payload {
    pub const TYPE_NAMES: [&'static str; 10] = [
        "BasisAnnouncement",
        "DetectionAnnouncement",
        "SiftDecision",
        "SampleRequest",
        "SampleReveal",
        "BellReveal",
        "ParityExchange",
        "HashSeed",
        "Ciphertext",
        "Abort",
    ];

    pub fn type_name(&self) -> &'static str {
        match self {
            Payload::BasisAnnouncement { .. } => "BasisAnnouncement",
            Payload::DetectionAnnouncement { .. } => "DetectionAnnouncement",
            Payload::SiftDecision { .. } => "SiftDecision",
            Payload::SampleRequest { .. } => "SampleRequest",
            Payload::SampleReveal { .. } => "SampleReveal",
            Payload::BellReveal { .. } => "BellReveal",
            Payload::ParityExchange { .. } => "ParityExchange",
            Payload::HashSeed { .. } => "HashSeed",
            Payload::Ciphertext { .. } => "Ciphertext",
            Payload::Abort { .. } => "Abort",
        }
    }

    pub fn may_carry_outcome_bits(type_name: &str) -> bool {
        matches!(type_name, "SampleReveal" | "BellReveal" | "ParityExchange")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolMessage {
    pub sender: Party,
    pub round: RoundRef,
    pub payload: Payload,
}

impl ProtocolMessage {
    pub fn new(sender: Party, round: RoundRef, payload: Payload) -> Self {
        Self { sender, round, payload }
    }
}

#[derive(Serialize)]
struct FrameOut<'a> {
    #[serde(rename = "type")]
    kind: &'a str,
    sender: Party,
    round: RoundRef,
    payload: Value,
}

#[derive(Deserialize)]
struct FrameIn {
    #[serde(rename = "type")]
    kind: String,
    sender: Party,
    round: RoundRef,
    payload: Value,
}

fn tagged_value(payload: &Payload) -> (String, Value) {
    let mut v = serde_json::to_value(payload).expect("payload serializes");
    let obj = v.as_object_mut().expect("adjacently tagged enum");
    let body = obj.remove("payload").unwrap_or(Value::Null);
    (payload.type_name().to_string(), body)
}

pub fn encode_wire(msg: &ProtocolMessage) -> Vec<u8> {
    let (kind, payload) = tagged_value(&msg.payload);
    let frame = FrameOut {
        kind: &kind,
        sender: msg.sender,
        round: msg.round,
        payload,
    };
    let json = serde_json::to_vec(&frame).expect("frame serializes");
    let mut out = Vec::with_capacity(4 + json.len());
    out.extend_from_slice(&(json.len() as u32).to_be_bytes());
    out.extend_from_slice(&json);
    out
}

/// Decodes exactly one frame; trailing bytes are a length mismatch.
pub fn decode_wire(bytes: &[u8]) -> Result<ProtocolMessage, WireError> {
    let (msg, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(WireError::LengthMismatch {
            declared: used - 4,
            actual: bytes.len() - 4,
        });
    }
    Ok(msg)
}

fn frame_body(bytes: &[u8]) -> Result<&[u8], WireError> {
    let prefix: [u8; 4] = bytes
        .get(..4)
        .ok_or(WireError::MissingPrefix)?
        .try_into()
        .expect("4-byte slice");
    let declared = u32::from_be_bytes(prefix) as usize;
    let actual = bytes.len() - 4;
    if actual < declared {
        return Err(WireError::LengthMismatch { declared, actual });
    }
    Ok(&bytes[4..4 + declared])
}

fn decode_prefix(bytes: &[u8]) -> Result<(ProtocolMessage, usize), WireError> {
    let body = frame_body(bytes)?;
    let frame: FrameIn = serde_json::from_slice(body).map_err(|e| WireError::Malformed(e.to_string()))?;
    if !Payload::TYPE_NAMES.contains(&frame.kind.as_str()) {
        return Err(WireError::UnknownType(frame.kind));
    }
    let tagged = serde_json::json!({ "type": frame.kind, "payload": frame.payload });
    let payload: Payload = serde_json::from_value(tagged).map_err(|e| WireError::Malformed(e.to_string()))?;
    Ok((
        ProtocolMessage {
            sender: frame.sender,
            round: frame.round,
            payload,
        },
        4 + body.len(),
    ))
}

/// Splits a byte stream of consecutive frames.
pub fn decode_frames(mut bytes: &[u8]) -> Result<Vec<ProtocolMessage>, WireError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (msg, used) = decode_prefix(bytes)?;
        out.push(msg);
        bytes = &bytes[used..];
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("frame {index} ({kind}) carries outcome bits in field {field:?}")]
    OutcomeLeak { index: usize, kind: String, field: String },
}

const OUTCOME_FIELDS: [&str; 3] = ["bits", "outcome", "outcomes"];

fn find_outcome_field(v: &Value) -> Option<String> {
    match v {
        Value::Object(map) => map.iter().find_map(|(k, v)| {
            if OUTCOME_FIELDS.contains(&k.as_str()) {
                Some(k.clone())
            } else {
                find_outcome_field(v)
            }
        }),
        Value::Array(items) => items.iter().find_map(find_outcome_field),
        _ => None,
    }
}

/// Scans a frame stream and fails on any outcome-bit field outside the
/// message types allowed to carry one.
pub fn audit_outcome_hygiene(frames: &[u8]) -> Result<usize, AuditError> {
    let mut rest = frames;
    let mut index = 0;
    while !rest.is_empty() {
        let body = frame_body(rest)?;
        let frame: FrameIn = serde_json::from_slice(body).map_err(|e| WireError::Malformed(e.to_string()))?;
        if !Payload::may_carry_outcome_bits(&frame.kind) {
            if let Some(field) = find_outcome_field(&frame.payload) {
                return Err(AuditError::OutcomeLeak {
                    index,
                    kind: frame.kind,
                    field,
                });
            }
        }
        rest = &rest[4 + body.len()..];
        index += 1;
    }
    Ok(index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryReceipt {
    pub seq: u64,
    pub to: Party,
}

/// A logged send; `to` is `None` for a broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub to: Option<Party>,
    pub message: ProtocolMessage,
}

#[derive(Debug, Default)]
struct ChannelState {
    closed: bool,
    // queues[recipient][sender]
    queues: [[VecDeque<ProtocolMessage>; 4]; 4],
    // next sender to serve, per recipient
    cursor: [usize; 4],
    transcript: Vec<TranscriptEntry>,
    next_seq: u64,
}

/// In-process channel with per-sender FIFO inboxes.
///
/// `recv` serves a recipient's senders round-robin by party id, which makes
/// delivery order a pure function of the send order.
#[derive(Debug, Default)]
pub struct Channel {
    state: Mutex<ChannelState>,
}

impl Channel {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ChannelState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn send(&self, msg: ProtocolMessage, to: Party) -> Result<DeliveryReceipt, ChannelError> {
        if msg.sender == to {
            return Err(ChannelError::SelfSend(to));
        }
        let mut st = self.lock();
        if st.closed {
            return Err(ChannelError::Closed);
        }
        let seq = st.next_seq;
        st.next_seq += 1;
        st.queues[to.index()][msg.sender.index()].push_back(msg.clone());
        st.transcript.push(TranscriptEntry {
            seq,
            to: Some(to),
            message: msg,
        });
        Ok(DeliveryReceipt { seq, to })
    }

    pub fn broadcast(&self, msg: ProtocolMessage) -> Result<Vec<DeliveryReceipt>, ChannelError> {
        let mut st = self.lock();
        if st.closed {
            return Err(ChannelError::Closed);
        }
        let seq = st.next_seq;
        st.next_seq += 1;
        let receipts = Party::ALL
            .iter()
            .filter(|&&p| p != msg.sender)
            .map(|&to| {
                st.queues[to.index()][msg.sender.index()].push_back(msg.clone());
                DeliveryReceipt { seq, to }
            })
            .collect();
        st.transcript.push(TranscriptEntry {
            seq,
            to: None,
            message: msg,
        });
        Ok(receipts)
    }

    /// Next message for `party`, serving senders round-robin.
    pub fn recv(&self, party: Party) -> Option<ProtocolMessage> {
        let mut st = self.lock();
        let r = party.index();
        for step in 0..4 {
            let sender = (st.cursor[r] + step) % 4;
            if let Some(msg) = st.queues[r][sender].pop_front() {
                st.cursor[r] = (sender + 1) % 4;
                return Some(msg);
            }
        }
        None
    }

    pub fn recv_from(&self, party: Party, sender: Party) -> Option<ProtocolMessage> {
        self.lock().queues[party.index()][sender.index()].pop_front()
    }

    pub fn pending(&self, party: Party) -> usize {
        self.lock().queues[party.index()].iter().map(VecDeque::len).sum()
    }

    pub fn close(&self) {
        self.lock().closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.lock().transcript.clone()
    }

    /// Writes every logged message as consecutive wire frames.
    pub fn dump_transcript<W: Write>(&self, mut out: W) -> io::Result<()> {
        for entry in &self.lock().transcript {
            out.write_all(&encode_wire(&entry.message))?;
        }
        Ok(())
    }

    pub fn transcript_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.dump_transcript(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Parity bits disclosed in `ParityExchange` replies.
    pub fn parity_bits_sent(&self) -> u64 {
        self.lock()
            .transcript
            .iter()
            .map(|e| match &e.message.payload {
                Payload::ParityExchange { bits, .. } => bits.len() as u64,
                _ => 0,
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(sender: Party, n: u64) -> ProtocolMessage {
        ProtocolMessage::new(
            sender,
            RoundRef::Round(n),
            Payload::DetectionAnnouncement { rounds: vec![n] },
        )
    }

    #[test]
    fn send_recv_fifo() {
        let ch = Channel::new();
        ch.send(msg(Party::Bob, 1), Party::Alice).unwrap();
        ch.send(msg(Party::Bob, 2), Party::Alice).unwrap();
        assert_eq!(ch.recv(Party::Alice), Some(msg(Party::Bob, 1)));
        assert_eq!(ch.recv(Party::Alice), Some(msg(Party::Bob, 2)));
        assert_eq!(ch.recv(Party::Alice), None);
    }

    #[test]
    fn closed_channel_rejects() {
        let ch = Channel::new();
        ch.close();
        assert!(matches!(
            ch.send(msg(Party::Bob, 1), Party::Alice),
            Err(ChannelError::Closed)
        ));
        assert!(matches!(ch.broadcast(msg(Party::Bob, 1)), Err(ChannelError::Closed)));
        assert!(matches!(
            Channel::new().send(msg(Party::Bob, 1), Party::Bob),
            Err(ChannelError::SelfSend(Party::Bob))
        ));
    }

    #[test]
    fn broadcast_reaches_everyone_else() {
        let ch = Channel::new();
        let m = ProtocolMessage::new(
            Party::Alice,
            RoundRef::None,
            Payload::Ciphertext {
                ciphertext: BitString::parse("1100").unwrap(),
            },
        );
        let receipts = ch.broadcast(m.clone()).unwrap();
        assert_eq!(receipts.len(), 3);
        for p in [Party::Bob, Party::Claire, Party::David] {
            assert_eq!(ch.recv(p), Some(m.clone()));
            assert_eq!(ch.recv(p), None);
        }
        assert_eq!(ch.recv(Party::Alice), None);
        ch.broadcast(msg(Party::Bob, 0)).unwrap();
        assert_eq!(ch.pending(Party::Alice), 1);
        assert_eq!(ch.pending(Party::Bob), 0);
    }

    #[test]
    fn interleaved_broadcasts_keep_sender_order() {
        let ch = Channel::new();
        for i in 0..5 {
            ch.broadcast(msg(Party::Bob, i)).unwrap();
            ch.broadcast(msg(Party::Claire, 100 + i)).unwrap();
        }
        let mut from_bob = Vec::new();
        let mut from_claire = Vec::new();
        while let Some(m) = ch.recv(Party::David) {
            let RoundRef::Round(n) = m.round else { unreachable!() };
            match m.sender {
                Party::Bob => from_bob.push(n),
                Party::Claire => from_claire.push(n),
                _ => unreachable!(),
            }
        }
        assert_eq!(from_bob, vec![0, 1, 2, 3, 4]);
        assert_eq!(from_claire, vec![100, 101, 102, 103, 104]);
    }

    #[test]
    fn round_robin_across_senders() {
        let ch = Channel::new();
        ch.send(msg(Party::Claire, 1), Party::Alice).unwrap();
        ch.send(msg(Party::Claire, 2), Party::Alice).unwrap();
        ch.send(msg(Party::Bob, 3), Party::Alice).unwrap();
        let order: Vec<Party> = std::iter::from_fn(|| ch.recv(Party::Alice)).map(|m| m.sender).collect();
        assert_eq!(order, vec![Party::Bob, Party::Claire, Party::Claire]);
    }

    #[test]
    fn wire_errors() {
        let frame = encode_wire(&msg(Party::Bob, 7));
        assert!(matches!(
            decode_wire(&frame[..frame.len() - 1]),
            Err(WireError::LengthMismatch { .. })
        ));
        assert!(matches!(decode_wire(&frame[..2]), Err(WireError::MissingPrefix)));
        let mut extra = frame.clone();
        extra.push(b' ');
        assert!(matches!(decode_wire(&extra), Err(WireError::LengthMismatch { .. })));

        let body = br#"{"type":"Gossip","sender":"Bob","round":null,"payload":{}}"#;
        let mut bad = (body.len() as u32).to_be_bytes().to_vec();
        bad.extend_from_slice(body);
        match decode_wire(&bad) {
            Err(e @ WireError::UnknownType(_)) => assert!(e.to_string().contains("Gossip")),
            other => panic!("{other:?}"),
        }
        let body = br#"{"type":"Abort","sender":"Bob""#;
        let mut bad = (body.len() as u32).to_be_bytes().to_vec();
        bad.extend_from_slice(body);
        assert!(matches!(decode_wire(&bad), Err(WireError::Malformed(_))));
    }

    #[test]
    fn frame_layout() {
        let m = ProtocolMessage::new(Party::Alice, RoundRef::None, Payload::Abort { reason: "x".into() });
        let frame = encode_wire(&m);
        let json = br#"{"type":"Abort","sender":"Alice","round":null,"payload":{"reason":"x"}}"#;
        assert_eq!(&frame[..4], &(json.len() as u32).to_be_bytes());
        assert_eq!(&frame[4..], json);
    }

    #[test]
    fn audit_flags_bits_in_wrong_type() {
        let ch = Channel::new();
        ch.send(msg(Party::Bob, 1), Party::Alice).unwrap();
        ch.broadcast(ProtocolMessage::new(
            Party::Bob,
            RoundRef::None,
            Payload::SampleReveal {
                positions: vec![0],
                bits: BitString::parse("1").unwrap(),
            },
        ))
        .unwrap();
        assert_eq!(audit_outcome_hygiene(&ch.transcript_bytes()).unwrap(), 2);

        let body = br#"{"type":"BasisAnnouncement","sender":"Bob","round":null,"payload":{"entries":[],"bits":"01"}}"#;
        let mut bad = (body.len() as u32).to_be_bytes().to_vec();
        bad.extend_from_slice(body);
        assert!(matches!(
            audit_outcome_hygiene(&bad),
            Err(AuditError::OutcomeLeak { index: 0, .. })
        ));
    }
}
