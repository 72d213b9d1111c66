//! Intercept-resend eavesdropping on the photons' spatial modes.
//!
//! Eve measures each attacked mode in a basis drawn uniformly from her basis
//! set and forwards the eigenstate she observed. Attacked modes are handled
//! in mode order a→d.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::{
    collapse_after_single_mode_measurement, make_psi4_minus, outcome_distribution, AnalyzerSetting, NoiseModel,
    OutcomeDistribution, Party, PureState, QuantumError, Sign, N_PATTERNS,
};

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("attack fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("eavesdropper needs at least one basis for the attacked modes")]
    NoBases,
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    attacked_modes: Vec<Party>,
    eve_bases: Vec<f64>,
    attack_fraction: f64,
}

impl AttackConfig {
    pub fn new(
        attacked_modes: impl IntoIterator<Item = Party>,
        eve_bases: Vec<f64>,
        attack_fraction: f64,
    ) -> Result<Self, AttackError> {
        if !(0.0..=1.0).contains(&attack_fraction) {
            return Err(AttackError::Fraction(attack_fraction));
        }
        let mut modes: Vec<Party> = attacked_modes.into_iter().collect();
        modes.sort();
        modes.dedup();
        if !modes.is_empty() && eve_bases.is_empty() {
            return Err(AttackError::NoBases);
        }
        Ok(Self {
            attacked_modes: modes,
            eve_bases,
            attack_fraction,
        })
    }

    pub fn none() -> Self {
        Self {
            attacked_modes: Vec::new(),
            eve_bases: Vec::new(),
            attack_fraction: 0.0,
        }
    }

    pub fn attacked_modes(&self) -> &[Party] {
        &self.attacked_modes
    }

    pub fn eve_bases(&self) -> &[f64] {
        &self.eve_bases
    }

    pub fn attack_fraction(&self) -> f64 {
        self.attack_fraction
    }

    pub fn is_active(&self) -> bool {
        self.attack_fraction > 0.0 && !self.attacked_modes.is_empty()
    }
}

/// Runs one round of the attack and returns the state the parties receive.
pub fn apply_intercept_resend<R: Rng + ?Sized>(
    state: &PureState,
    config: &AttackConfig,
    rng: &mut R,
) -> Result<PureState, AttackError> {
    state.check_normalized()?;
    if !config.is_active() || !rng.random_bool(config.attack_fraction) {
        return Ok(state.clone());
    }
    let mut current = state.clone();
    for &mode in &config.attacked_modes {
        let phi = config.eve_bases[rng.random_range(0..config.eve_bases.len())];
        let plus = collapse_after_single_mode_measurement(&current, mode, phi, Sign::Plus)?;
        let u: f64 = rng.random();
        let next = if u < plus.probability {
            plus.state
        } else {
            collapse_after_single_mode_measurement(&current, mode, phi, Sign::Minus)?.state
        };
        // one branch always has probability ≥ 1/2
        current = next.unwrap_or(current);
    }
    Ok(current)
}

/// Exact outcome distribution of the parties' measurement after a
/// full-time attack, averaged over Eve's basis and outcome choices.
pub fn attacked_distribution(
    state: &PureState,
    config: &AttackConfig,
    settings: &[AnalyzerSetting; 4],
) -> Result<OutcomeDistribution, AttackError> {
    let mut acc = [0.0; N_PATTERNS];
    enumerate_branches(state, &config.attacked_modes, &config.eve_bases, 1.0, &mut |w, s| {
        let d = outcome_distribution(s, settings, &NoiseModel::ideal())?;
        for (a, p) in acc.iter_mut().zip(d.probs()) {
            *a += w * p;
        }
        Ok(())
    })?;
    Ok(OutcomeDistribution::from_weights(acc))
}

fn enumerate_branches<F>(
    state: &PureState,
    modes: &[Party],
    bases: &[f64],
    weight: f64,
    visit: &mut F,
) -> Result<(), AttackError>
where
    F: FnMut(f64, &PureState) -> Result<(), AttackError>,
{
    let Some((&mode, rest)) = modes.split_first() else {
        return visit(weight, state);
    };
    let basis_weight = weight / bases.len() as f64;
    for &phi in bases {
        for sign in [Sign::Plus, Sign::Minus] {
            let c = collapse_after_single_mode_measurement(state, mode, phi, sign)?;
            if let Some(next) = c.state {
                enumerate_branches(&next, rest, bases, basis_weight * c.probability, visit)?;
            }
        }
    }
    Ok(())
}

/// Expected sifted-key error rate for the |Ψ₄⁻⟩ source when every sifted
/// round has all parties on one phase drawn uniformly from `protocol_bases`.
pub fn expected_qber_under_attack(
    config: &AttackConfig,
    protocol_bases: &[f64],
    visibility: f64,
) -> Result<f64, AttackError> {
    let noise = NoiseModel::new(visibility)?;
    let psi = make_psi4_minus();
    let mut total = 0.0;
    for &theta in protocol_bases {
        let settings = [AnalyzerSetting::new(theta); 4];
        let clean = outcome_distribution(&psi, &settings, &noise)?.odd_parity_mass();
        let attacked = if config.is_active() {
            noise
                .apply(&attacked_distribution(&psi, config, &settings)?)
                .odd_parity_mass()
        } else {
            clean
        };
        let f = config.attack_fraction;
        total += (1.0 - f) * clean + f * attacked;
    }
    Ok(total / protocol_bases.len() as f64)
}
