//! Experiment configuration: a flat `key = value` text format.
//!
//! Blank lines and text after `#` are ignored. Angles carry an explicit
//! unit suffix (`45deg`, `0.785rad`) and are stored in radians. Lists are
//! comma separated. Command-line flags are applied on top of the file
//! through the same [`ExperimentConfig::set`] entry point.

use std::fmt::Write as _;
use std::path::PathBuf;

use qss_core::adversary::AttackConfig;
use qss_core::protocol::{BasisSchedule, CheckMode, ProtocolConfig, Roles, Thresholds, WindowBudget};
use qss_core::quantum::Party;
use qss_core::session::{PostprocConfig, SessionConfig};
use qss_core::source::{EventCounting, SourceConfig};

use crate::CliError;

/// Settings for the φ_b sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// Phases of a, c and d.
    pub fixed: [f64; 3],
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Coincidence events sampled per sweep point.
    pub samples: u64,
}

impl ScanConfig {
    /// Sweep points from `start` to `stop` inclusive.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor();
        if n < 0.0 {
            return Vec::new();
        }
        (0..=n as u64).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: CheckMode,
    pub dealer: Party,
    pub visibility: f64,
    pub source: SourceConfig,
    pub windows: u64,
    /// When set, measure until this many sifted bits; `windows` is then
    /// ignored.
    pub target_bits: Option<usize>,
    pub max_windows: u64,
    pub attack_modes: Vec<Party>,
    pub attack_fraction: f64,
    /// Eve's phases; `None` means the mode's two keying phases.
    pub attack_bases: Option<Vec<f64>>,
    pub thresholds: Thresholds,
    pub sample_fraction: f64,
    pub postproc: PostprocConfig,
    pub out_dir: PathBuf,
    /// Analyzer phases of a..d for the histogram.
    pub phases: [f64; 4],
    /// Coincidence events sampled for the histogram.
    pub samples: u64,
    pub scan: ScanConfig,
    /// Bell test from the closed-form correlations instead of a session.
    pub analytic: bool,
    /// Bits per block in the key transcript.
    pub transcript_block: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let protocol = ProtocolConfig::default();
        Self {
            seed: 1,
            mode: protocol.mode,
            dealer: protocol.roles.dealer(),
            visibility: protocol.visibility,
            source: protocol.source,
            windows: 3600,
            target_bits: None,
            max_windows: 10_000_000,
            attack_modes: Vec::new(),
            attack_fraction: 1.0,
            attack_bases: None,
            thresholds: protocol.thresholds,
            sample_fraction: protocol.sample_fraction,
            postproc: PostprocConfig::default(),
            out_dir: PathBuf::from("out"),
            phases: [0.0; 4],
            samples: 100_000,
            scan: ScanConfig {
                fixed: [0.0; 3],
                start: 0.0,
                stop: 4.0 * std::f64::consts::PI,
                step: 10f64.to_radians(),
                samples: 1000,
            },
            analytic: false,
            transcript_block: 100,
        }
    }
}

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key} = {value:?}: {why}"))
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn flag(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

/// Parses `45deg` or `0.785rad` into radians.
pub fn parse_angle(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (num, to_rad) = if let Some(n) = t.strip_suffix("deg") {
        (n, true)
    } else if let Some(n) = t.strip_suffix("rad") {
        (n, false)
    } else {
        return Err(format!("angle {t:?} needs a unit suffix (deg or rad)"));
    };
    let v: f64 = num.trim().parse().map_err(|e| format!("angle {t:?}: {e}"))?;
    if !v.is_finite() {
        return Err(format!("angle {t:?} is not finite"));
    }
    Ok(if to_rad { v.to_radians() } else { v })
}

fn angles(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|a| parse_angle(a).map_err(|e| bad(key, value, e)))
        .collect()
}

fn angle_array<const N: usize>(key: &str, value: &str) -> Result<[f64; N], CliError> {
    let v = angles(key, value)?;
    v.try_into()
        .map_err(|v: Vec<f64>| bad(key, value, format!("expected {N} angles, got {}", v.len())))
}

fn parties(key: &str, value: &str) -> Result<Vec<Party>, CliError> {
    if value.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    value
        .chars()
        .filter(|c| !matches!(c, ',' | ' '))
        .map(|c| Party::from_mode(c).ok_or_else(|| bad(key, value, format!("unknown mode {c:?}"))))
        .collect()
}

fn party(key: &str, value: &str) -> Result<Party, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "a" | "alice" => Ok(Party::Alice),
        "b" | "bob" => Ok(Party::Bob),
        "c" | "claire" => Ok(Party::Claire),
        "d" | "david" => Ok(Party::David),
        _ => Err(bad(key, value, "expected one of a, b, c, d")),
    }
}

fn format_angles(phis: &[f64]) -> String {
    phis.iter().map(|p| format!("{}rad", p)).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses a config file body, applied on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {}", i + 1, e.message())))?;
        }
        Ok(config)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = number(key, value)?,
            "mode" => self.mode = value.parse().map_err(|e: String| bad(key, value, e))?,
            "dealer" => self.dealer = party(key, value)?,
            "visibility" => self.visibility = number(key, value)?,
            "rate" => self.source.four_photon_rate = number(key, value)?,
            "window" => self.source.window_seconds = number(key, value)?,
            "efficiency" => self.source.detector_efficiency = number(key, value)?,
            "count_all_events" => {
                self.source.counting = if flag(key, value)? {
                    EventCounting::AllEvents
                } else {
                    EventCounting::FirstOnly
                }
            }
            "dead_time" => self.source.dead_time_seconds = number(key, value)?,
            "windows" => self.windows = number(key, value)?,
            "target_bits" => {
                self.target_bits = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(number(key, value)?)
                }
            }
            "max_windows" => self.max_windows = number(key, value)?,
            "attack" => self.set_attack(value)?,
            "attack_modes" => self.attack_modes = parties(key, value)?,
            "attack_fraction" => self.attack_fraction = number(key, value)?,
            "attack_bases" => self.attack_bases = Some(angles(key, value)?),
            "max_qber" => self.thresholds.max_qber = number(key, value)?,
            "bell_bound" => self.thresholds.bell_bound = number(key, value)?,
            "bell_sigmas" => self.thresholds.bell_sigmas = number(key, value)?,
            "sample_fraction" => self.sample_fraction = number(key, value)?,
            "epsilon" => self.postproc.epsilon = number(key, value)?,
            "message_bits" => self.postproc.message_bits = number(key, value)?,
            "passes" => self.postproc.passes = number(key, value)?,
            "verify_parities" => self.postproc.verify_parities = number(key, value)?,
            "max_verifications" => self.postproc.max_verifications = number(key, value)?,
            "block_factor" => self.postproc.block_factor = number(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "phases" => self.phases = angle_array(key, value)?,
            "samples" => self.samples = number(key, value)?,
            "scan_fixed" => self.scan.fixed = angle_array(key, value)?,
            "scan_start" => self.scan.start = parse_angle(value).map_err(|e| bad(key, value, e))?,
            "scan_stop" => self.scan.stop = parse_angle(value).map_err(|e| bad(key, value, e))?,
            "scan_step" => self.scan.step = parse_angle(value).map_err(|e| bad(key, value, e))?,
            "scan_samples" => self.scan.samples = number(key, value)?,
            "analytic" => self.analytic = flag(key, value)?,
            "transcript_block" => self.transcript_block = number(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// `--attack` shorthand: `none`, `b`, `bc`, or modes with a fraction
    /// such as `b:0.5`.
    fn set_attack(&mut self, value: &str) -> Result<(), CliError> {
        let (modes, fraction) = match value.split_once(':') {
            Some((m, f)) => (m, Some(number("attack", f)?)),
            None => (value, None),
        };
        self.attack_modes = parties("attack", modes)?;
        self.attack_fraction = fraction.unwrap_or(1.0);
        Ok(())
    }

    pub fn budget(&self) -> WindowBudget {
        match self.target_bits {
            Some(bits) => WindowBudget::TargetSiftedBits {
                bits,
                max_windows: self.max_windows,
            },
            None => WindowBudget::Windows(self.windows),
        }
    }

    pub fn attack(&self) -> Result<AttackConfig, CliError> {
        if self.attack_modes.is_empty() {
            return Ok(AttackConfig::none());
        }
        let bases = self
            .attack_bases
            .clone()
            .unwrap_or_else(|| BasisSchedule::new(self.mode).keying_phases().to_vec());
        AttackConfig::new(self.attack_modes.iter().copied(), bases, self.attack_fraction)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks every parameter against its domain.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if !(0.0..=1.0).contains(&self.visibility) {
            return fail(format!("visibility must be in [0, 1], got {}", self.visibility));
        }
        self.source.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 1.0) {
            return fail(format!(
                "sample_fraction must be in (0, 1), got {}",
                self.sample_fraction
            ));
        }
        if !(0.0..0.5).contains(&self.thresholds.max_qber) {
            return fail(format!(
                "max_qber must be in [0, 0.5), got {}",
                self.thresholds.max_qber
            ));
        }
        if !(self.thresholds.bell_sigmas >= 0.0 && self.thresholds.bell_bound.is_finite()) {
            return fail("bell_bound must be finite and bell_sigmas >= 0".into());
        }
        if self.postproc.block_factor.is_nan() || self.postproc.block_factor <= 0.0 || self.postproc.passes == 0 {
            return fail("block_factor must be > 0 and passes >= 1".into());
        }
        if self.scan.step.is_nan() || self.scan.step <= 0.0 {
            return fail(format!("scan_step must be > 0, got {}rad", self.scan.step));
        }
        if self.scan.stop < self.scan.start {
            return fail("scan_stop must not precede scan_start".into());
        }
        if self.transcript_block == 0 {
            return fail("transcript_block must be >= 1".into());
        }
        if self.target_bits == Some(0) {
            return fail("target_bits must be >= 1".into());
        }
        self.attack()?;
        Ok(())
    }

    pub fn protocol(&self) -> Result<ProtocolConfig, CliError> {
        self.validate()?;
        Ok(ProtocolConfig {
            roles: Roles::new(self.dealer),
            mode: self.mode,
            source: self.source.clone(),
            visibility: self.visibility,
            attack: self.attack()?,
            budget: self.budget(),
            thresholds: self.thresholds,
            sample_fraction: self.sample_fraction,
        })
    }

    pub fn session(&self) -> Result<SessionConfig, CliError> {
        Ok(SessionConfig {
            protocol: self.protocol()?,
            postproc: self.postproc,
        })
    }

    /// Every key in config-file syntax, sorted, for echoing into reports.
    /// The output directory is left out so reports do not depend on where
    /// they were written.
    pub fn echo(&self) -> String {
        let modes: String = self.attack_modes.iter().map(|p| p.mode()).collect();
        let mut entries = vec![
            ("analytic", self.analytic.to_string()),
            (
                "attack_bases",
                self.attack_bases
                    .as_deref()
                    .map(format_angles)
                    .unwrap_or_else(|| "keying".into()),
            ),
            ("attack_fraction", self.attack_fraction.to_string()),
            ("attack_modes", if modes.is_empty() { "none".into() } else { modes }),
            ("bell_bound", self.thresholds.bell_bound.to_string()),
            ("bell_sigmas", self.thresholds.bell_sigmas.to_string()),
            ("block_factor", self.postproc.block_factor.to_string()),
            (
                "count_all_events",
                (self.source.counting == EventCounting::AllEvents).to_string(),
            ),
            ("dead_time", self.source.dead_time_seconds.to_string()),
            ("dealer", self.dealer.mode().to_string()),
            ("efficiency", self.source.detector_efficiency.to_string()),
            ("epsilon", self.postproc.epsilon.to_string()),
            ("max_qber", self.thresholds.max_qber.to_string()),
            ("max_verifications", self.postproc.max_verifications.to_string()),
            ("max_windows", self.max_windows.to_string()),
            ("message_bits", self.postproc.message_bits.to_string()),
            ("mode", self.mode.to_string()),
            ("passes", self.postproc.passes.to_string()),
            ("phases", format_angles(&self.phases)),
            ("rate", self.source.four_photon_rate.to_string()),
            ("sample_fraction", self.sample_fraction.to_string()),
            ("samples", self.samples.to_string()),
            ("scan_fixed", format_angles(&self.scan.fixed)),
            ("scan_samples", self.scan.samples.to_string()),
            ("scan_start", format_angles(&[self.scan.start])),
            ("scan_step", format_angles(&[self.scan.step])),
            ("scan_stop", format_angles(&[self.scan.stop])),
            ("seed", self.seed.to_string()),
            ("target_bits", self.target_bits.map_or("none".into(), |b| b.to_string())),
            ("transcript_block", self.transcript_block.to_string()),
            ("verify_parities", self.postproc.verify_parities.to_string()),
            ("visibility", self.visibility.to_string()),
            ("window", self.source.window_seconds.to_string()),
            ("windows", self.windows.to_string()),
        ];
        entries.sort_by_key(|(k, _)| *k);
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
