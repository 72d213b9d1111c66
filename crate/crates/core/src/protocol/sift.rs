use super::schedule::{BasisChoice, CheckMode};
use super::ProtocolError;
use crate::quantum::Party;

/// Everything announced about one detected round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundAnnouncements {
    pub round: u64,
    pub window: u64,
    pub bases: [Option<BasisChoice>; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiftOutcome {
    pub key_rounds: Vec<u64>,
    pub bell_rounds: Vec<u64>,
}

/// Keeps rounds where all four parties used the same basis. Rounds with an
/// overridden phase pair go to the Bell pool instead (Bell mode only).
pub fn sift(rounds: &[RoundAnnouncements], mode: CheckMode) -> Result<SiftOutcome, ProtocolError> {
    let mut out = SiftOutcome::default();
    for r in rounds {
        let mut choices = [BasisChoice {
            index: 0,
            overridden: false,
        }; 4];
        for p in Party::ALL {
            choices[p.index()] = r.bases[p.index()].ok_or(ProtocolError::MissingAnnouncement {
                round: r.round,
                party: p,
            })?;
        }
        if mode == CheckMode::Bell && choices.iter().any(|c| c.overridden) {
            out.bell_rounds.push(r.round);
        } else if choices.iter().all(|c| !c.overridden && c.index == choices[0].index) {
            out.key_rounds.push(r.round);
        }
    }
    out.key_rounds.sort_unstable();
    out.bell_rounds.sort_unstable();
    Ok(out)
}
