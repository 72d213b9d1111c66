use std::f64::consts::FRAC_PI_2;

use qss_core::adversary::{expected_qber_under_attack, AttackConfig};
use qss_core::channel::{audit_outcome_hygiene, decode_frames, Payload};
use qss_core::protocol::{
    run_protocol, semi_access_predictor, CheckMode, ProtocolConfig, ProtocolError, Roles, Verdict, WindowBudget,
};
use qss_core::quantum::Party;
use qss_core::source::SourceConfig;
use qss_core::stats::binomial_sigma;
use qss_core::SeedTree;

fn target(bits: usize) -> WindowBudget {
    WindowBudget::TargetSiftedBits {
        bits,
        max_windows: 10_000_000,
    }
}

/// High-rate source so tests reach large detection counts in few windows.
fn fast_source() -> SourceConfig {
    SourceConfig {
        four_photon_rate: 20.0,
        ..SourceConfig::default()
    }
}

#[test]
fn noiseless_session_has_no_errors() {
    let config = ProtocolConfig {
        budget: target(2000),
        ..ProtocolConfig::default()
    };
    let s = run_protocol(&config, &SeedTree::new(1)).unwrap();
    assert_eq!(s.sifted.len(), 2000);
    assert_eq!(s.key.len(), 1800);
    assert_eq!(s.report.estimate, 0.0);
    assert_eq!(s.report.verdict, Verdict::Proceed);
    assert_eq!(s.sifted.error_count(&s.roles), 0);
    assert_eq!(s.sifted.access_xor(&s.roles), *s.sifted.row(Party::Alice));
}

#[test]
fn noisy_session_estimates_visibility_qber() {
    let config = ProtocolConfig {
        visibility: 0.9,
        budget: target(2000),
        ..ProtocolConfig::default()
    };
    let s = run_protocol(&config, &SeedTree::new(2)).unwrap();
    let z = (s.report.estimate - 0.05) / binomial_sigma(0.05, s.report.sample_size as u64);
    assert!(z.abs() < 3.0, "QBER {} (z = {z})", s.report.estimate);
    let true_rate = s.sifted.error_count(&s.roles) as f64 / 2000.0;
    assert!((true_rate - 0.05).abs() < 3.0 * binomial_sigma(0.05, 2000));
}

#[test]
fn sample_positions_never_reach_the_key() {
    let config = ProtocolConfig {
        budget: target(500),
        ..ProtocolConfig::default()
    };
    let s = run_protocol(&config, &SeedTree::new(3)).unwrap();
    let transcript = s.channel.transcript();
    let positions = transcript
        .iter()
        .find_map(|e| match &e.message.payload {
            Payload::SampleRequest { positions } => Some(positions.clone()),
            _ => None,
        })
        .unwrap();
    let sampled_rounds: Vec<u64> = positions.iter().map(|&i| s.sifted.rounds()[i]).collect();
    assert_eq!(positions.len(), 50);
    assert!(s.key.rounds().iter().all(|r| !sampled_rounds.contains(r)));
}

#[test]
fn transcripts_are_byte_reproducible_and_clean() {
    let config = ProtocolConfig {
        visibility: 0.95,
        budget: WindowBudget::Windows(4000),
        ..ProtocolConfig::default()
    };
    let a = run_protocol(&config, &SeedTree::new(4)).unwrap();
    let b = run_protocol(&config, &SeedTree::new(4)).unwrap();
    let bytes = a.channel.transcript_bytes();
    assert_eq!(bytes, b.channel.transcript_bytes());
    assert_eq!(audit_outcome_hygiene(&bytes).unwrap(), a.channel.transcript().len());
    assert_eq!(decode_frames(&bytes).unwrap().len(), a.channel.transcript().len());
    let c = run_protocol(&config, &SeedTree::new(5)).unwrap();
    assert_ne!(bytes, c.channel.transcript_bytes());
}

#[test]
fn any_party_can_deal() {
    for dealer in Party::ALL {
        let config = ProtocolConfig {
            roles: Roles::new(dealer),
            budget: target(300),
            ..ProtocolConfig::default()
        };
        let s = run_protocol(&config, &SeedTree::new(6)).unwrap();
        assert_eq!(s.sifted.error_count(&s.roles), 0);
        assert_eq!(s.report.verdict, Verdict::Proceed);
    }
}

#[test]
fn sift_ratio_is_one_eighth() {
    let config = ProtocolConfig {
        source: fast_source(),
        budget: WindowBudget::Windows(100_000),
        ..ProtocolConfig::default()
    };
    let s = run_protocol(&config, &SeedTree::new(7)).unwrap();
    let n = s.stats.detected_rounds as u64;
    assert!(n >= 99_000);
    let ratio = s.stats.key_pool as f64 / n as f64;
    assert!((ratio - 0.125).abs() < 3.0 * binomial_sigma(0.125, n), "{ratio}");
}

#[test]
fn full_intercept_resend_aborts() {
    let attack = AttackConfig::new([Party::Bob], vec![0.0, FRAC_PI_2], 1.0).unwrap();
    let expected = expected_qber_under_attack(&attack, &[0.0, FRAC_PI_2], 1.0).unwrap();
    let config = ProtocolConfig {
        attack,
        budget: target(2000),
        ..ProtocolConfig::default()
    };
    match run_protocol(&config, &SeedTree::new(8)) {
        Err(ProtocolError::Aborted(s)) => {
            assert_eq!(s.report.verdict, Verdict::Abort);
            let z = (s.report.estimate - expected) / binomial_sigma(expected, s.report.sample_size as u64);
            assert!(z.abs() < 3.0, "{} vs {expected}", s.report.estimate);
            assert!(s
                .channel
                .transcript()
                .iter()
                .any(|e| matches!(e.message.payload, Payload::Abort { .. })));
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn insufficient_windows() {
    let config = ProtocolConfig {
        budget: WindowBudget::TargetSiftedBits {
            bits: 1000,
            max_windows: 100,
        },
        ..ProtocolConfig::default()
    };
    assert!(matches!(
        run_protocol(&config, &SeedTree::new(9)),
        Err(ProtocolError::InsufficientDetections { needed: 1000, .. })
    ));
    let tiny = ProtocolConfig {
        budget: WindowBudget::Windows(5),
        ..ProtocolConfig::default()
    };
    assert!(matches!(
        run_protocol(&tiny, &SeedTree::new(9)),
        Err(ProtocolError::InsufficientDetections { .. })
    ));
}

#[test]
fn bell_mode_session() {
    let config = ProtocolConfig {
        mode: CheckMode::Bell,
        visibility: 0.943,
        source: fast_source(),
        budget: WindowBudget::Windows(100_000),
        ..ProtocolConfig::default()
    };
    let s = run_protocol(&config, &SeedTree::new(10)).unwrap();
    assert_eq!(s.report.verdict, Verdict::Proceed);
    let ratio = s.stats.bell_pool as f64 / s.stats.detected_rounds as f64;
    assert!((ratio - 0.2).abs() < 0.01);
    assert!((s.report.estimate - 0.943 * 1.8856).abs() < 3.0 * s.report.std_err);
    // Bell-mode key rounds use the diagonal bases and keep the parity law
    let err = s.sifted.error_count(&s.roles) as f64 / s.sifted.len() as f64;
    assert!((err - (1.0 - 0.943) / 2.0).abs() < 0.01);
}

#[test]
fn uniform_noise_gives_no_violation() {
    let config = ProtocolConfig {
        mode: CheckMode::Bell,
        visibility: 0.0,
        source: fast_source(),
        budget: WindowBudget::Windows(50_000),
        ..ProtocolConfig::default()
    };
    match run_protocol(&config, &SeedTree::new(11)) {
        Err(ProtocolError::Aborted(s)) => assert!(s.report.estimate < 3.0 * s.report.std_err + 0.05),
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn semi_access_guesses_are_imperfect() {
    let config = ProtocolConfig {
        source: fast_source(),
        budget: WindowBudget::Windows(200_000),
        ..ProtocolConfig::default()
    };
    let s = run_protocol(&config, &SeedTree::new(12)).unwrap();
    let key = &s.sifted;
    let n = key.len() as u64;
    let phase_of = |_i: usize| 0.0; // both keying bases have the same conditionals
    let map_guess = |known: &[(Party, u8)], i: usize| {
        let p = semi_access_predictor(Party::Alice, known, phase_of(i)).unwrap();
        (p[1] > p[0]) as u8
    };
    let alice = key.row(Party::Alice);
    let mut single_hits = 0u64;
    let mut pair_hits = 0u64;
    for i in 0..key.len() {
        let b = key.row(Party::Bob)[i];
        let c = key.row(Party::Claire)[i];
        single_hits += (map_guess(&[(Party::Bob, b)], i) == alice[i]) as u64;
        pair_hits += (map_guess(&[(Party::Bob, b), (Party::Claire, c)], i) == alice[i]) as u64;
    }
    let single = single_hits as f64 / n as f64;
    let pair = pair_hits as f64 / n as f64;
    let (want_single, want_pair) = (map_accuracy(&[1]), map_accuracy(&[1, 2]));
    assert!((want_single - 2.0 / 3.0).abs() < 1e-12);
    assert!((want_pair - 5.0 / 6.0).abs() < 1e-12);
    assert!(
        (single - want_single).abs() < 3.0 * binomial_sigma(want_single, n),
        "{single}"
    );
    assert!((pair - want_pair).abs() < 3.0 * binomial_sigma(want_pair, n), "{pair}");
    assert!(single < 1.0 && pair < 1.0);
}

/// Best achievable guess rate of Alice's H/V bit from the listed modes,
/// enumerated from the squared coefficients {4,1,1,1,1,4}/12.
fn map_accuracy(modes: &[usize]) -> f64 {
    let terms = [
        ("HHVV", 4.0),
        ("HVHV", 1.0),
        ("HVVH", 1.0),
        ("VHHV", 1.0),
        ("VHVH", 1.0),
        ("VVHH", 4.0),
    ];
    let mut by_view: std::collections::BTreeMap<String, [f64; 2]> = Default::default();
    for (pattern, w) in terms {
        let view: String = modes.iter().map(|&m| pattern.as_bytes()[m] as char).collect();
        let alice = (pattern.as_bytes()[0] == b'V') as usize;
        by_view.entry(view).or_default()[alice] += w / 12.0;
    }
    by_view.values().map(|p| p[0].max(p[1])).sum()
}
