use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::quantum::{BellSetting, Party};

/// Which eavesdropping check the session is set up for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckMode {
    /// {H,V} / {P,M} bases, QBER sample check.
    Qber,
    /// ±π/4 bases, Bell check on Bob's override rounds.
    Bell,
}

impl fmt::Display for CheckMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckMode::Qber => "QBER_MODE",
            CheckMode::Bell => "BELL_MODE",
        })
    }
}

impl FromStr for CheckMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "QBER" | "QBER_MODE" => Ok(CheckMode::Qber),
            "BELL" | "BELL_MODE" => Ok(CheckMode::Bell),
            other => Err(format!("unknown mode {other:?} (expected QBER_MODE or BELL_MODE)")),
        }
    }
}

/// A party's basis in one window: index into its phase pair, plus whether
/// the phase pair was the scheduled override pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisChoice {
    pub index: u8,
    pub overridden: bool,
}

/// Per-party phase pairs and the override rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSchedule {
    mode: CheckMode,
    override_period: u64,
}

const QBER_PHASES: [f64; 2] = [0.0, FRAC_PI_2];
const BELL_PHASES: [f64; 2] = [FRAC_PI_4, -FRAC_PI_4];

impl BasisSchedule {
    pub fn new(mode: CheckMode) -> Self {
        Self {
            mode,
            override_period: 5,
        }
    }

    pub fn mode(&self) -> CheckMode {
        self.mode
    }

    pub fn keying_phases(&self) -> [f64; 2] {
        match self.mode {
            CheckMode::Qber => QBER_PHASES,
            CheckMode::Bell => BELL_PHASES,
        }
    }

    /// Bob measures the {0, π/2} pair on every fifth window in Bell mode.
    pub fn is_override(&self, party: Party, window: u64) -> bool {
        self.mode == CheckMode::Bell && party == Party::Bob && window.is_multiple_of(self.override_period)
    }

    pub fn phases(&self, party: Party, window: u64) -> [f64; 2] {
        if self.is_override(party, window) {
            QBER_PHASES
        } else {
            self.keying_phases()
        }
    }

    pub fn phase(&self, party: Party, window: u64, index: u8) -> f64 {
        self.phases(party, window)[index as usize]
    }

    pub fn choice(&self, party: Party, window: u64, index: u8) -> BasisChoice {
        BasisChoice {
            index,
            overridden: self.is_override(party, window),
        }
    }

    /// The Bell setting realized by override rounds (Bob's pair is the
    /// override pair, the others keep their keying pair).
    pub fn bell_setting(&self) -> BellSetting {
        BellSetting {
            phases: std::array::from_fn(|m| {
                if Party::ALL[m] == Party::Bob {
                    QBER_PHASES
                } else {
                    BELL_PHASES
                }
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_only_for_bob_in_bell_mode() {
        let bell = BasisSchedule::new(CheckMode::Bell);
        assert!(bell.is_override(Party::Bob, 0));
        assert!(bell.is_override(Party::Bob, 10));
        assert!(!bell.is_override(Party::Bob, 11));
        assert!(!bell.is_override(Party::Alice, 10));
        let qber = BasisSchedule::new(CheckMode::Qber);
        assert!(!qber.is_override(Party::Bob, 0));
        assert_eq!(bell.phases(Party::Bob, 5), [0.0, FRAC_PI_2]);
        assert_eq!(bell.phases(Party::Bob, 6), [FRAC_PI_4, -FRAC_PI_4]);
        assert_eq!(bell.bell_setting(), BellSetting::standard());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("bell_mode".parse::<CheckMode>().unwrap(), CheckMode::Bell);
        assert_eq!("QBER".parse::<CheckMode>().unwrap(), CheckMode::Qber);
        assert!("x".parse::<CheckMode>().is_err());
    }
}
