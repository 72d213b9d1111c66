use proptest::prelude::*;
use qss_core::channel::{
    decode_frames, decode_wire, encode_wire, BasisEntry, ParityKind, Payload, ProtocolMessage, RoundRef, WireError,
};
use qss_core::{BitString, Party};

fn party() -> impl Strategy<Value = Party> {
    (0usize..4).prop_map(|i| Party::from_index(i).unwrap())
}

fn bits() -> impl Strategy<Value = BitString> {
    prop::collection::vec(0u8..2, 0..64).prop_map(BitString::from)
}

fn round() -> impl Strategy<Value = RoundRef> {
    prop_oneof![
        Just(RoundRef::None),
        any::<u64>().prop_map(RoundRef::Round),
        (any::<u32>(), any::<u32>()).prop_map(|(s, l)| RoundRef::Range {
            start: s as u64,
            end: s as u64 + l as u64
        }),
    ]
}

fn payload() -> impl Strategy<Value = Payload> {
    let rounds = prop::collection::vec(any::<u64>(), 0..8);
    let positions = prop::collection::vec(0usize..10_000, 0..8);
    prop_oneof![
        prop::collection::vec((any::<u64>(), any::<u64>(), 0u8..2, any::<bool>()), 0..6).prop_map(|v| {
            Payload::BasisAnnouncement {
                entries: v
                    .into_iter()
                    .map(|(round, window, basis, overridden)| BasisEntry {
                        round,
                        window,
                        basis,
                        overridden,
                    })
                    .collect(),
            }
        }),
        rounds
            .clone()
            .prop_map(|rounds| Payload::DetectionAnnouncement { rounds }),
        (rounds.clone(), rounds.clone()).prop_map(|(key_rounds, bell_rounds)| Payload::SiftDecision {
            key_rounds,
            bell_rounds
        }),
        positions
            .clone()
            .prop_map(|positions| Payload::SampleRequest { positions }),
        (positions, bits()).prop_map(|(positions, bits)| Payload::SampleReveal { positions, bits }),
        (rounds, bits()).prop_map(|(rounds, bits)| Payload::BellReveal { rounds, bits }),
        (
            prop_oneof![
                Just(ParityKind::Block),
                Just(ParityKind::Verify),
                Just(ParityKind::Subset)
            ],
            any::<u32>(),
            any::<u64>(),
            prop::collection::vec((0usize..5000, 0usize..5000), 0..6),
            bits()
        )
            .prop_map(|(kind, pass, seed, ranges, bits)| Payload::ParityExchange {
                kind,
                pass,
                seed,
                ranges,
                bits
            }),
        (0usize..500, 0usize..500, bits()).prop_map(|(n_in, n_out, seed)| Payload::HashSeed { n_in, n_out, seed }),
        bits().prop_map(|ciphertext| Payload::Ciphertext { ciphertext }),
        ".{0,40}".prop_map(|reason| Payload::Abort { reason }),
    ]
}

fn message() -> impl Strategy<Value = ProtocolMessage> {
    (party(), round(), payload()).prop_map(|(s, r, p)| ProtocolMessage::new(s, r, p))
}

proptest! {
    #[test]
    fn frames_round_trip(msg in message()) {
        let bytes = encode_wire(&msg);
        let declared = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        prop_assert_eq!(declared, bytes.len() - 4);
        prop_assert_eq!(decode_wire(&bytes).unwrap(), msg);
    }

    #[test]
    fn streams_split_into_frames(msgs in prop::collection::vec(message(), 0..6)) {
        let stream: Vec<u8> = msgs.iter().flat_map(encode_wire).collect();
        prop_assert_eq!(decode_frames(&stream).unwrap(), msgs);
    }

    #[test]
    fn truncated_frames_are_rejected(msg in message(), cut in 1usize..20) {
        let bytes = encode_wire(&msg);
        let cut = cut.min(bytes.len());
        let short = &bytes[..bytes.len() - cut];
        prop_assert!(decode_wire(short).is_err());
    }
}

#[test]
fn envelope_shape() {
    let msg = ProtocolMessage::new(
        Party::Bob,
        RoundRef::Round(7),
        Payload::Ciphertext {
            ciphertext: BitString::parse("1100").unwrap(),
        },
    );
    let bytes = encode_wire(&msg);
    let json: serde_json::Value = serde_json::from_slice(&bytes[4..]).unwrap();
    assert_eq!(json["type"], "Ciphertext");
    assert_eq!(json["round"], 7);
    assert!(json.get("sender").is_some() && json.get("payload").is_some());
    let mut tampered = json.clone();
    tampered["type"] = "Gossip".into();
    let body = serde_json::to_vec(&tampered).unwrap();
    let mut frame = (body.len() as u32).to_be_bytes().to_vec();
    frame.extend(body);
    assert!(matches!(decode_wire(&frame), Err(WireError::UnknownType(t)) if t == "Gossip"));
}
