//! Exact state-vector model of the four-photon polarization state.
//!
//! Basis patterns are 4-bit indices `b_a b_b b_c b_d` with mode `a` in the
//! most significant bit. Bit 0 is `H` in the product basis and, for analyzer
//! outcomes, the transmitted port (eigenvalue +1).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_PATTERNS: usize = 16;

const NORM_TOL_INPUT: f64 = 1e-9;
const MIN_OUTCOME_PROB: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum QuantumError {
    #[error("state is not normalized (norm² = {0})")]
    Unnormalized(f64),
    #[error("visibility {0} outside [0, 1]")]
    Visibility(f64),
}

/// The four parties, each holding the photon of one spatial mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
    Claire,
    David,
}

impl Party {
    pub const ALL: [Party; 4] = [Party::Alice, Party::Bob, Party::Claire, Party::David];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Party> {
        Self::ALL.get(i).copied()
    }

    /// Spatial mode label `a`..`d`.
    pub fn mode(self) -> char {
        (b'a' + self as u8) as char
    }

    pub fn from_mode(c: char) -> Option<Party> {
        match c.to_ascii_lowercase() {
            'a' => Some(Party::Alice),
            'b' => Some(Party::Bob),
            'c' => Some(Party::Claire),
            'd' => Some(Party::David),
            _ => None,
        }
    }

    /// Position of this party's bit inside a 4-bit pattern.
    pub fn shift(self) -> u32 {
        3 - self as u32
    }

    pub fn bit_of(self, pattern: usize) -> u8 {
        ((pattern >> self.shift()) & 1) as u8
    }

    pub fn letter(self) -> char {
        match self {
            Party::Alice => 'A',
            Party::Bob => 'B',
            Party::Claire => 'C',
            Party::David => 'D',
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Parity `b_a ⊕ b_b ⊕ b_c ⊕ b_d` of a pattern.
pub fn parity(pattern: usize) -> u8 {
    (pattern.count_ones() & 1) as u8
}

/// `HHVV`-style label of a pattern.
pub fn pattern_label(pattern: usize) -> String {
    Party::ALL
        .iter()
        .map(|p| if p.bit_of(pattern) == 0 { 'H' } else { 'V' })
        .collect()
}

/// `0011`-style label of a pattern.
pub fn pattern_bits(pattern: usize) -> String {
    Party::ALL
        .iter()
        .map(|p| if p.bit_of(pattern) == 0 { '0' } else { '1' })
        .collect()
}

/// Four-photon polarization state as 16 amplitudes in the H/V product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: [Complex64; N_PATTERNS],
}

impl PureState {
    /// Wraps raw amplitudes without normalizing them.
    pub fn from_amplitudes(amplitudes: [Complex64; N_PATTERNS]) -> Self {
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex64; N_PATTERNS] {
        &self.amplitudes
    }

    pub fn amplitude(&self, pattern: usize) -> Complex64 {
        self.amplitudes[pattern]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn check_normalized(&self) -> Result<(), QuantumError> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOL_INPUT {
            return Err(QuantumError::Unnormalized(n));
        }
        Ok(())
    }

    /// `⟨e_a e_b e_c e_d | ψ⟩` for single-photon states given as (c_H, c_V).
    pub fn project(&self, factors: &[[Complex64; 2]; 4]) -> Complex64 {
        (0..N_PATTERNS)
            .map(|pat| {
                let bra = Party::ALL.iter().fold(Complex64::new(1.0, 0.0), |acc, p| {
                    acc * factors[p.index()][p.bit_of(pat) as usize].conj()
                });
                bra * self.amplitudes[pat]
            })
            .sum()
    }
}

/// The resource state |Ψ₄⁻⟩:
/// (2|HHVV⟩ − |HVHV⟩ − |HVVH⟩ − |VHHV⟩ − |VHVH⟩ + 2|VVHH⟩) / (2√3).
pub fn make_psi4_minus() -> PureState {
    let norm = 1.0 / (2.0 * 3f64.sqrt());
    let mut amplitudes = [Complex64::new(0.0, 0.0); N_PATTERNS];
    for (pat, coeff) in [
        (0b0011, 2.0),
        (0b0101, -1.0),
        (0b0110, -1.0),
        (0b1001, -1.0),
        (0b1010, -1.0),
        (0b1100, 2.0),
    ] {
        amplitudes[pat] = Complex64::new(coeff * norm, 0.0);
    }
    PureState { amplitudes }
}

/// Analyzer outcome label; `Plus` is the transmitted port and bit 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_bit(bit: u8) -> Sign {
        if bit == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Phase setting of one polarization analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    pub phi: f64,
}

impl AnalyzerSetting {
    pub fn new(phi: f64) -> Self {
        Self { phi }
    }
}

/// H/V components of `(|R⟩ ± e^{iφ}|L⟩)/√2` with `|R⟩ = (|H⟩ + i|V⟩)/√2`
/// and `|L⟩ = (|H⟩ − i|V⟩)/√2`.
pub fn analyzer_eigenstate(phi: f64, sign: Sign) -> [Complex64; 2] {
    let e = Complex64::from_polar(sign.value(), phi);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::i();
    [(one + e) * 0.5, i * (one - e) * 0.5]
}

/// Probabilities of the 16 outcome patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    probs: [f64; N_PATTERNS],
}

impl OutcomeDistribution {
    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / N_PATTERNS as f64; N_PATTERNS],
        }
    }

    /// Accepts any nonnegative weights and normalizes them.
    pub fn from_weights(weights: [f64; N_PATTERNS]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut probs = weights;
        for p in &mut probs {
            *p /= total;
        }
        Self { probs }
    }

    pub fn point(pattern: usize) -> Self {
        let mut probs = [0.0; N_PATTERNS];
        probs[pattern] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64; N_PATTERNS] {
        &self.probs
    }

    pub fn prob(&self, pattern: usize) -> f64 {
        self.probs[pattern]
    }

    pub fn odd_parity_mass(&self) -> f64 {
        (0..N_PATTERNS).filter(|&p| parity(p) == 1).map(|p| self.probs[p]).sum()
    }

    /// Probability that `party` reads `bit`.
    pub fn marginal(&self, party: Party, bit: u8) -> f64 {
        (0..N_PATTERNS)
            .filter(|&p| party.bit_of(p) == bit)
            .map(|p| self.probs[p])
            .sum()
    }

    /// Inverse-CDF sampling from one uniform draw in [0, 1).
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (pat, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return pat;
            }
        }
        // u landed in the rounding slack above the accumulated total
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(N_PATTERNS - 1)
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_with(rng.random::<f64>())
    }

    /// Convex combination `w·self + (1 − w)·other`.
    pub fn mix(&self, other: &OutcomeDistribution, w: f64) -> OutcomeDistribution {
        let mut probs = [0.0; N_PATTERNS];
        for (i, p) in probs.iter_mut().enumerate() {
            *p = w * self.probs[i] + (1.0 - w) * other.probs[i];
        }
        Self { probs }
    }
}

/// White-noise admixture: `V·p + (1 − V)/16`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    visibility: f64,
}

impl NoiseModel {
    pub fn new(visibility: f64) -> Result<Self, QuantumError> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(QuantumError::Visibility(visibility));
        }
        Ok(Self { visibility })
    }

    pub fn ideal() -> Self {
        Self { visibility: 1.0 }
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }

    pub fn apply(&self, dist: &OutcomeDistribution) -> OutcomeDistribution {
        dist.mix(&OutcomeDistribution::uniform(), self.visibility)
    }
}

/// Born-rule probabilities for measuring every mode in its analyzer basis,
/// mixed with white noise.
pub fn outcome_distribution(
    state: &PureState,
    settings: &[AnalyzerSetting; 4],
    noise: &NoiseModel,
) -> Result<OutcomeDistribution, QuantumError> {
    state.check_normalized()?;
    let eig: [[[Complex64; 2]; 2]; 4] = std::array::from_fn(|m| {
        [
            analyzer_eigenstate(settings[m].phi, Sign::Plus),
            analyzer_eigenstate(settings[m].phi, Sign::Minus),
        ]
    });
    let mut probs = [0.0; N_PATTERNS];
    for (outcome, p) in probs.iter_mut().enumerate() {
        let factors = std::array::from_fn(|m| eig[m][Party::ALL[m].bit_of(outcome) as usize]);
        *p = state.project(&factors).norm_sqr();
    }
    Ok(noise.apply(&OutcomeDistribution { probs }))
}

/// Closed-form four-photon correlation of |Ψ₄⁻⟩.
pub fn correlation_analytic(phi_a: f64, phi_b: f64, phi_c: f64, phi_d: f64) -> f64 {
    (2.0 / 3.0) * (phi_a + phi_b - phi_c - phi_d).cos() + (1.0 / 3.0) * (phi_a - phi_b).cos() * (phi_c - phi_d).cos()
}

/// Expectation of the product of the four ±1 outcomes.
pub fn correlation_from_distribution(dist: &OutcomeDistribution) -> f64 {
    dist.probs
        .iter()
        .enumerate()
        .map(|(pat, &p)| if parity(pat) == 0 { p } else { -p })
        .sum()
}

/// Two analyzer phases per party for the four-party Bell quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellSetting {
    /// `phases[party][k]`, k = 0 for the first setting, 1 for the second.
    pub phases: [[f64; 2]; 4],
}

impl BellSetting {
    /// Bob at {0, π/2}, everyone else at {π/4, −π/4}.
    pub fn standard() -> Self {
        let diag = [FRAC_PI_4, -FRAC_PI_4];
        Self {
            phases: [diag, [0.0, FRAC_PI_2], diag, diag],
        }
    }

    /// Phases of one setting combination; `combo` packs k_a..k_d as a pattern.
    pub fn combination(&self, combo: usize) -> [f64; 4] {
        std::array::from_fn(|m| self.phases[m][Party::ALL[m].bit_of(combo) as usize])
    }
}

/// Per-combination sign of the sign-vector sum: `s^1 = s`, `s^2 = 1`.
fn bell_term_sign(signs: usize, combo: usize) -> f64 {
    // a set bit in `signs` means s_x = −1; setting index 0 is exponent 1
    let flips = (signs & !combo) & 0b1111;
    if flips.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Bell quantity from the 16 correlations indexed by setting combination.
pub fn bell_s_from_table(table: &[f64; N_PATTERNS]) -> f64 {
    let total: f64 = (0..N_PATTERNS)
        .map(|signs| {
            (0..N_PATTERNS)
                .map(|combo| bell_term_sign(signs, combo) * table[combo])
                .sum::<f64>()
                .abs()
        })
        .sum();
    total / N_PATTERNS as f64
}

/// ∂S/∂E for each combination, used for error propagation.
pub fn bell_s_gradient(table: &[f64; N_PATTERNS]) -> [f64; N_PATTERNS] {
    let mut grad = [0.0; N_PATTERNS];
    for signs in 0..N_PATTERNS {
        let inner: f64 = (0..N_PATTERNS)
            .map(|combo| bell_term_sign(signs, combo) * table[combo])
            .sum();
        let s = if inner >= 0.0 { 1.0 } else { -1.0 };
        for (combo, g) in grad.iter_mut().enumerate() {
            *g += s * bell_term_sign(signs, combo) / N_PATTERNS as f64;
        }
    }
    grad
}

/// Four-party Bell quantity; local realism bounds it by 1.
pub fn bell_s<E>(setting: &BellSetting, correlation: E) -> f64
where
    E: Fn(f64, f64, f64, f64) -> f64,
{
    let table = std::array::from_fn(|combo| {
        let [a, b, c, d] = setting.combination(combo);
        correlation(a, b, c, d)
    });
    bell_s_from_table(&table)
}

#[derive(Debug, Error, PartialEq)]
#[error("mean visibility {0} outside [0, 1]")]
pub struct VisibilityRangeError(pub f64);

pub fn qber_from_visibility(v_bar: f64) -> Result<f64, VisibilityRangeError> {
    if !(0.0..=1.0).contains(&v_bar) {
        return Err(VisibilityRangeError(v_bar));
    }
    Ok((1.0 - v_bar) / 2.0)
}

/// Result of measuring a single mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapse {
    pub probability: f64,
    /// `None` when the outcome is (numerically) impossible.
    pub state: Option<PureState>,
}

/// Projects one mode onto `|sign, φ⟩` and renormalizes.
pub fn collapse_after_single_mode_measurement(
    state: &PureState,
    mode: Party,
    phi: f64,
    sign: Sign,
) -> Result<Collapse, QuantumError> {
    state.check_normalized()?;
    let e = analyzer_eigenstate(phi, sign);
    let shift = mode.shift();
    let mut amplitudes = [Complex64::new(0.0, 0.0); N_PATTERNS];
    for rest in (0..N_PATTERNS).filter(|p| (p >> shift) & 1 == 0) {
        let (h, v) = (rest, rest | (1 << shift));
        let overlap = e[0].conj() * state.amplitudes[h] + e[1].conj() * state.amplitudes[v];
        amplitudes[h] = e[0] * overlap;
        amplitudes[v] = e[1] * overlap;
    }
    let projected = PureState { amplitudes };
    let probability = projected.norm_sqr();
    if probability < MIN_OUTCOME_PROB {
        return Ok(Collapse {
            probability,
            state: None,
        });
    }
    let scale = 1.0 / probability.sqrt();
    for a in &mut amplitudes {
        *a *= scale;
    }
    Ok(Collapse {
        probability,
        state: Some(PureState { amplitudes }),
    })
}
