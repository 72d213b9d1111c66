use std::f64::consts::PI;

use proptest::prelude::*;
use qss_core::quantum::{
    bell_s, correlation_analytic, correlation_from_distribution, make_psi4_minus, outcome_distribution,
    AnalyzerSetting, BellSetting, NoiseModel,
};

fn settings(phis: [f64; 4]) -> [AnalyzerSetting; 4] {
    phis.map(AnalyzerSetting::new)
}

fn angle() -> impl Strategy<Value = f64> {
    -2.0 * PI..2.0 * PI
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn state_vector_matches_closed_form(a in angle(), b in angle(), c in angle(), d in angle()) {
        let dist = outcome_distribution(&make_psi4_minus(), &settings([a, b, c, d]), &NoiseModel::ideal()).unwrap();
        let e = correlation_from_distribution(&dist);
        prop_assert!((e - correlation_analytic(a, b, c, d)).abs() < 1e-9);
        prop_assert!((dist.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(dist.probs().iter().all(|&p| p >= 0.0));
    }
}

proptest! {
    #[test]
    fn noise_scales_linearly(a in angle(), b in angle(), c in angle(), d in angle(), v in 0.0f64..=1.0) {
        let dist = outcome_distribution(&make_psi4_minus(), &settings([a, b, c, d]), &NoiseModel::new(v).unwrap()).unwrap();
        prop_assert!((correlation_from_distribution(&dist) - v * correlation_analytic(a, b, c, d)).abs() < 1e-12);
    }

    #[test]
    fn correlation_is_two_pi_periodic(a in angle(), b in angle(), c in angle(), d in angle()) {
        let base = correlation_analytic(a, b, c, d);
        let tau = 2.0 * PI;
        for shifted in [
            correlation_analytic(a + tau, b, c, d),
            correlation_analytic(a, b + tau, c, d),
            correlation_analytic(a, b, c + tau, d),
            correlation_analytic(a, b, c, d + tau),
        ] {
            prop_assert!((shifted - base).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_symmetries(a in angle(), b in angle(), c in angle(), d in angle()) {
        let base = correlation_analytic(a, b, c, d);
        prop_assert!((correlation_analytic(b, a, c, d) - base).abs() < 1e-12);
        prop_assert!((correlation_analytic(a, b, d, c) - base).abs() < 1e-12);
        prop_assert!((correlation_analytic(c, d, a, b) - base).abs() < 1e-12);
    }

    #[test]
    fn equal_phases_give_even_parity(phi in angle()) {
        let dist = outcome_distribution(&make_psi4_minus(), &settings([phi; 4]), &NoiseModel::ideal()).unwrap();
        prop_assert!(dist.odd_parity_mass() <= 1e-12);
    }

    #[test]
    fn local_strategies_respect_classical_bound(phases in proptest::array::uniform4(proptest::array::uniform2(angle()))) {
        let setting = BellSetting { phases };
        prop_assert!(max_local_s(&setting) <= 1.0 + 1e-12);
    }
}

/// Each party assigns a fixed ±1 to each of its two settings: 2⁸ strategies.
fn max_local_s(setting: &BellSetting) -> f64 {
    let mut best: f64 = 0.0;
    for strategy in 0u32..256 {
        let value = |party: usize, phi: f64| -> f64 {
            let k = if phi == setting.phases[party][0] { 0 } else { 1 };
            if (strategy >> (2 * party + k)) & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let s = bell_s(setting, |a, b, c, d| {
            value(0, a) * value(1, b) * value(2, c) * value(3, d)
        });
        best = best.max(s);
    }
    best
}

#[test]
fn local_strategies_at_standard_angles() {
    let s = max_local_s(&BellSetting::standard());
    assert!((s - 1.0).abs() < 1e-12, "{s}");
}
