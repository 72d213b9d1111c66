//! Pulsed four-photon source with fixed acquisition windows.
//!
//! Four-photon events arrive as a Poisson process. Each analyzer setting is
//! held for one window; by default only the first event of a window is kept.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{apply_intercept_resend, AttackConfig, AttackError};
use crate::protocol::schedule::BasisSchedule;
use crate::quantum::{
    outcome_distribution, pattern_bits, AnalyzerSetting, NoiseModel, OutcomeDistribution, Party, PureState,
    QuantumError,
};
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("invalid source configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("record line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How events beyond the first in one window are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventCounting {
    FirstOnly,
    /// Every event in the window is kept, all under the window's settings.
    AllEvents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Four-photon events per second.
    pub four_photon_rate: f64,
    pub window_seconds: f64,
    pub counting: EventCounting,
    /// Per-photon detection probability.
    pub detector_efficiency: f64,
    /// Analyzer repositioning time between windows (throughput only).
    pub dead_time_seconds: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            four_photon_rate: 0.4,
            window_seconds: 1.0,
            counting: EventCounting::FirstOnly,
            detector_efficiency: 1.0,
            dead_time_seconds: 0.0,
        }
    }
}

impl SourceConfig {
    /// Default source with the 40% avalanche photodiode efficiency.
    pub fn with_lab_detectors() -> Self {
        Self {
            detector_efficiency: 0.4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if !(self.four_photon_rate >= 0.0 && self.four_photon_rate.is_finite()) {
            return Err(SourceError::Config(format!(
                "rate must be >= 0, got {}",
                self.four_photon_rate
            )));
        }
        if !(self.window_seconds > 0.0 && self.window_seconds.is_finite()) {
            return Err(SourceError::Config(format!(
                "window must be > 0 s, got {}",
                self.window_seconds
            )));
        }
        if !(0.0..=1.0).contains(&self.detector_efficiency) {
            return Err(SourceError::Config(format!(
                "detector efficiency must be in [0, 1], got {}",
                self.detector_efficiency
            )));
        }
        if self.dead_time_seconds.is_nan() || self.dead_time_seconds < 0.0 {
            return Err(SourceError::Config(format!(
                "dead time must be >= 0 s, got {}",
                self.dead_time_seconds
            )));
        }
        Ok(())
    }

    pub fn mean_events_per_window(&self) -> f64 {
        self.four_photon_rate * self.window_seconds
    }

    /// Probability that a window yields a detection under the first-event rule.
    pub fn detection_probability(&self) -> f64 {
        (1.0 - (-self.mean_events_per_window()).exp()) * self.detector_efficiency.powi(4)
    }

    /// Expected detected events per window when every event is kept.
    pub fn mean_detected_events(&self) -> f64 {
        self.mean_events_per_window() * self.detector_efficiency.powi(4)
    }

    /// Whole windows that fit in `seconds`, including dead time.
    pub fn windows_in(&self, seconds: f64) -> u64 {
        (seconds / (self.window_seconds + self.dead_time_seconds)).floor() as u64
    }
}

struct EventSampler {
    poisson: Option<Poisson<f64>>,
    efficiency: f64,
    counting: EventCounting,
}

impl EventSampler {
    fn new(config: &SourceConfig) -> Result<Self, SourceError> {
        config.validate()?;
        let lambda = config.mean_events_per_window();
        let poisson = if lambda > 0.0 {
            Some(Poisson::new(lambda).map_err(|e| SourceError::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            poisson,
            efficiency: config.detector_efficiency,
            counting: config.counting,
        })
    }

    /// Number of fully detected events to keep in one window.
    fn detected_events<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let Some(poisson) = &self.poisson else {
            return 0;
        };
        let emitted = poisson.sample(rng) as u64;
        let survives = |rng: &mut R| (0..4).all(|_| rng.random::<f64>() < self.efficiency);
        match self.counting {
            EventCounting::FirstOnly => (emitted > 0 && survives(rng)) as u64,
            EventCounting::AllEvents => (0..emitted).filter(|_| survives(rng)).count() as u64,
        }
    }
}

/// One window under the first-event rule: `None` if nothing was detected.
pub fn sample_window<R: Rng + ?Sized>(
    config: &SourceConfig,
    dist: &OutcomeDistribution,
    rng: &mut R,
) -> Result<Option<usize>, SourceError> {
    let sampler = EventSampler::new(&SourceConfig {
        counting: EventCounting::FirstOnly,
        ..config.clone()
    })?;
    Ok((sampler.detected_events(rng) > 0).then(|| dist.sample(rng)))
}

/// One registered event (or an empty window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Sequential record index; equals `window_index` under the first-event rule.
    pub round_index: u64,
    pub window_index: u64,
    /// Index into each party's phase pair.
    pub bases: [u8; 4],
    pub phases: [f64; 4],
    /// Outcome pattern, present iff the window registered a four-fold event.
    pub outcome: Option<u8>,
}

impl RoundRecord {
    pub fn detected(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn bit(&self, party: Party) -> Option<u8> {
        self.outcome.map(|o| party.bit_of(o as usize))
    }

    pub fn settings(&self) -> [AnalyzerSetting; 4] {
        self.phases.map(AnalyzerSetting::new)
    }
}

/// Quantum resource handed to the source each round.
#[derive(Debug, Clone)]
pub struct Resource {
    pub state: PureState,
    pub noise: NoiseModel,
    pub attack: AttackConfig,
}

/// Streaming generator of rounds; draws are reproducible from the seed.
pub struct SessionGenerator {
    config: SourceConfig,
    schedule: BasisSchedule,
    resource: Resource,
    sampler: EventSampler,
    party_rngs: [ChaCha8Rng; 4],
    source_rng: ChaCha8Rng,
    adversary_rng: ChaCha8Rng,
    cache: HashMap<[u64; 4], OutcomeDistribution>,
    next_window: u64,
    next_round: u64,
}

impl SessionGenerator {
    pub fn new(
        config: &SourceConfig,
        schedule: BasisSchedule,
        resource: Resource,
        seeds: &SeedTree,
    ) -> Result<Self, SourceError> {
        resource.state.check_normalized()?;
        Ok(Self {
            sampler: EventSampler::new(config)?,
            config: config.clone(),
            schedule,
            resource,
            party_rngs: Party::ALL.map(|p| seeds.stream(Stream::Bases(p))),
            source_rng: seeds.stream(Stream::Source),
            adversary_rng: seeds.stream(Stream::Adversary),
            cache: HashMap::new(),
            next_window: 0,
            next_round: 0,
        })
    }

    pub fn config(&self) -> &SourceConfig {
        &self.config
    }

    pub fn windows_elapsed(&self) -> u64 {
        self.next_window
    }

    fn distribution(&mut self, phases: &[f64; 4]) -> Result<OutcomeDistribution, SourceError> {
        let settings = phases.map(AnalyzerSetting::new);
        if self.resource.attack.is_active() {
            let state = apply_intercept_resend(&self.resource.state, &self.resource.attack, &mut self.adversary_rng)?;
            return Ok(outcome_distribution(&state, &settings, &self.resource.noise)?);
        }
        let key = phases.map(f64::to_bits);
        if let Some(d) = self.cache.get(&key) {
            return Ok(d.clone());
        }
        let d = outcome_distribution(&self.resource.state, &settings, &self.resource.noise)?;
        self.cache.insert(key, d.clone());
        Ok(d)
    }

    /// Advances one window. Returns one record for an empty window, or one
    /// record per kept event.
    pub fn next_window(&mut self) -> Result<Vec<RoundRecord>, SourceError> {
        let window = self.next_window;
        self.next_window += 1;
        let bases: [u8; 4] = std::array::from_fn(|m| self.party_rngs[m].random_range(0..2u8));
        let phases: [f64; 4] = std::array::from_fn(|m| self.schedule.phase(Party::ALL[m], window, bases[m]));
        let events = self.sampler.detected_events(&mut self.source_rng);
        let mut out = Vec::with_capacity(events.max(1) as usize);
        if events == 0 {
            out.push(self.record(window, bases, phases, None));
        }
        for _ in 0..events {
            let dist = self.distribution(&phases)?;
            let outcome = dist.sample(&mut self.source_rng) as u8;
            out.push(self.record(window, bases, phases, Some(outcome)));
        }
        Ok(out)
    }

    fn record(&mut self, window: u64, bases: [u8; 4], phases: [f64; 4], outcome: Option<u8>) -> RoundRecord {
        let round_index = self.next_round;
        self.next_round += 1;
        RoundRecord {
            round_index,
            window_index: window,
            bases,
            phases,
            outcome,
        }
    }
}

/// Runs `n_windows` acquisition windows and logs every record.
pub fn run_session(
    n_windows: u64,
    schedule: BasisSchedule,
    resource: Resource,
    config: &SourceConfig,
    seeds: &SeedTree,
) -> Result<Vec<RoundRecord>, SourceError> {
    let mut generator = SessionGenerator::new(config, schedule, resource, seeds)?;
    let mut records = Vec::new();
    for _ in 0..n_windows {
        records.extend(generator.next_window()?);
    }
    Ok(records)
}

pub const RECORD_HEADER: &str = "# round window basis_a basis_b basis_c basis_d phi_a phi_b phi_c phi_d outcome";

/// Writes one whitespace-separated record per line. Phases use Rust's
/// shortest round-trip float formatting; `outcome` is four bits
/// `b_a b_b b_c b_d` or `-` for an empty window.
pub fn write_records<W: Write>(mut out: W, records: &[RoundRecord]) -> io::Result<()> {
    writeln!(out, "{RECORD_HEADER}")?;
    let mut line = String::new();
    for r in records {
        line.clear();
        let _ = write!(line, "{} {}", r.round_index, r.window_index);
        for b in r.bases {
            let _ = write!(line, " {b}");
        }
        for p in r.phases {
            let _ = write!(line, " {p:?}");
        }
        match r.outcome {
            Some(o) => {
                let _ = write!(line, " {}", pattern_bits(o as usize));
            }
            None => line.push_str(" -"),
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<RoundRecord>, SourceError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |msg: String| SourceError::Parse { line: line_no, msg };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 11 {
            return Err(err(format!("expected 11 fields, found {}", fields.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| err(format!("{s:?}: {e}")));
        let round_index = int(fields[0])?;
        let window_index = int(fields[1])?;
        let mut bases = [0u8; 4];
        for (m, b) in bases.iter_mut().enumerate() {
            *b = match fields[2 + m] {
                "0" => 0,
                "1" => 1,
                other => return Err(err(format!("basis must be 0 or 1, got {other:?}"))),
            };
        }
        let mut phases = [0.0; 4];
        for (m, p) in phases.iter_mut().enumerate() {
            *p = fields[6 + m]
                .parse()
                .map_err(|e| err(format!("{:?}: {e}", fields[6 + m])))?;
        }
        let outcome = match fields[10] {
            "-" => None,
            bits if bits.len() == 4 && bits.bytes().all(|c| c == b'0' || c == b'1') => {
                Some(u8::from_str_radix(bits, 2).expect("validated binary digits"))
            }
            other => return Err(err(format!("bad outcome {other:?}"))),
        };
        records.push(RoundRecord {
            round_index,
            window_index,
            bases,
            phases,
            outcome,
        });
    }
    Ok(records)
}
