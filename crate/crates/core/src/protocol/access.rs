use super::ProtocolError;
use crate::quantum::{make_psi4_minus, outcome_distribution, AnalyzerSetting, NoiseModel, Party, N_PATTERNS};

/// The access set's reconstruction of the dealer's bit.
pub fn reconstruct_dealer_bit(x_b: u8, x_c: u8, x_d: u8) -> u8 {
    (x_b ^ x_c ^ x_d) & 1
}

/// Exact distribution `[P(dealer = 0), P(dealer = 1)]` given the outcomes of
/// one or two non-dealers, for a round where everyone measured at `phase`.
pub fn semi_access_predictor(dealer: Party, known: &[(Party, u8)], phase: f64) -> Result<[f64; 2], ProtocolError> {
    if known.is_empty() {
        return Err(ProtocolError::Subset("empty coalition".into()));
    }
    if known.len() >= 3 {
        return Err(ProtocolError::Subset(
            "the full access set reconstructs exactly; use reconstruct_dealer_bit".into(),
        ));
    }
    if known.iter().any(|(p, _)| *p == dealer) {
        return Err(ProtocolError::Subset(format!("{dealer} is the dealer")));
    }
    if known.len() == 2 && known[0].0 == known[1].0 {
        return Err(ProtocolError::Subset(format!("{} listed twice", known[0].0)));
    }
    let dist = outcome_distribution(
        &make_psi4_minus(),
        &[AnalyzerSetting::new(phase); 4],
        &NoiseModel::ideal(),
    )?;
    let mut weight = [0.0; 2];
    for pat in 0..N_PATTERNS {
        if known.iter().all(|&(p, b)| p.bit_of(pat) == b) {
            weight[dealer.bit_of(pat) as usize] += dist.prob(pat);
        }
    }
    let total = weight[0] + weight[1];
    if total <= 0.0 {
        return Err(ProtocolError::Subset("observed outcomes have probability zero".into()));
    }
    Ok([weight[0] / total, weight[1] / total])
}
