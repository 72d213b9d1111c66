//! The four experiment commands. Each writes its tables and report into
//! the configured output directory and returns the report text.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use qss_core::adversary::expected_qber_under_attack;
use qss_core::protocol::{run_protocol, BasisSchedule, CheckMode, CheckReport, ProtocolError, SessionResult, Verdict};
use qss_core::quantum::{
    bell_s, correlation_analytic, correlation_from_distribution, make_psi4_minus, outcome_distribution, parity,
    pattern_bits, pattern_label, AnalyzerSetting, BellSetting, NoiseModel, Party, N_PATTERNS,
};
use qss_core::session::{run_session, SessionError};
use qss_core::stats::{signed_mean, Estimate};
use qss_core::{SeedTree, Stream};

use crate::config::ExperimentConfig;
use crate::fit::{fit_visibility, CurvePoint};
use crate::CliError;

/// Ideal Bell value of the state at the standard angles.
pub fn ideal_bell_value() -> f64 {
    bell_s(&BellSetting::standard(), correlation_analytic)
}

fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn report_header(command: &str, config: &ExperimentConfig) -> String {
    format!("command: {command}\n\n[config]\n{}\n[result]\n", config.echo())
}

fn settings(phases: [f64; 4]) -> [AnalyzerSetting; 4] {
    phases.map(AnalyzerSetting::new)
}

fn sample_correlation(
    dist: &qss_core::quantum::OutcomeDistribution,
    n: u64,
    rng: &mut impl rand::Rng,
) -> (Estimate, [u64; N_PATTERNS]) {
    let mut counts = [0u64; N_PATTERNS];
    let mut sum = 0i64;
    for _ in 0..n {
        let pattern = dist.sample(rng);
        counts[pattern] += 1;
        sum += if parity(pattern) == 0 { 1 } else { -1 };
    }
    (signed_mean(sum, n), counts)
}

/// Sixteen-bin coincidence table at fixed analyzer phases.
pub fn histogram(config: &ExperimentConfig) -> Result<String, CliError> {
    config.validate()?;
    let noise = NoiseModel::new(config.visibility).map_err(|e| CliError::Config(e.to_string()))?;
    let dist = outcome_distribution(&make_psi4_minus(), &settings(config.phases), &noise)
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let mut rng = SeedTree::new(config.seed).stream(Stream::Aux(0));
    let n = config.samples;
    let (e, counts) = sample_correlation(&dist, n, &mut rng);

    let mut csv = String::from("pattern,bits,label,analytic_prob");
    if n > 0 {
        csv.push_str(",count,frequency");
    }
    csv.push('\n');
    for (pattern, &count) in counts.iter().enumerate() {
        let _ = write!(
            csv,
            "{pattern},{},{},{:.10}",
            pattern_bits(pattern),
            pattern_label(pattern),
            dist.prob(pattern)
        );
        if n > 0 {
            let _ = write!(csv, ",{count},{:.10}", count as f64 / n as f64);
        }
        csv.push('\n');
    }

    let analytic = correlation_from_distribution(&dist);
    let mut report = report_header("histogram", config);
    let _ = writeln!(report, "samples: {n}");
    let _ = writeln!(report, "correlation_analytic: {analytic:.6}");
    if n > 0 {
        let _ = writeln!(report, "correlation_sampled: {:.6}", e.value);
        let _ = writeln!(report, "correlation_std_err: {:.6}", e.std_err);
        let _ = writeln!(report, "z_vs_analytic: {:.3}", e.z_score(analytic));
    }
    write_file(&config.out_dir, "histogram.csv", &csv)?;
    write_file(&config.out_dir, "histogram.txt", &report)?;
    Ok(report)
}

/// Sweeps φ_b with a, c, d fixed and fits the visibility.
pub fn correlation_scan(config: &ExperimentConfig) -> Result<String, CliError> {
    config.validate()?;
    let noise = NoiseModel::new(config.visibility).map_err(|e| CliError::Config(e.to_string()))?;
    let psi = make_psi4_minus();
    let [a, c, d] = config.scan.fixed;
    let mut rng = SeedTree::new(config.seed).stream(Stream::Aux(1));
    let n = config.scan.samples;

    let mut csv = String::from("phi_b_rad,phi_b_deg,e_analytic,e_sampled,stderr\n");
    let mut points = Vec::new();
    for phi_b in config.scan.points() {
        let dist = outcome_distribution(&psi, &settings([a, phi_b, c, d]), &noise)
            .map_err(|e| CliError::Failed(e.to_string()))?;
        let ideal = correlation_analytic(a, phi_b, c, d);
        let (e, _) = sample_correlation(&dist, n, &mut rng);
        let _ = write!(
            csv,
            "{phi_b:.10},{:.6},{:.10}",
            phi_b.to_degrees(),
            config.visibility * ideal
        );
        if n > 0 {
            let _ = write!(csv, ",{:.10},{:.10}", e.value, e.std_err);
        } else {
            csv.push_str(",,");
        }
        csv.push('\n');
        points.push(CurvePoint {
            ideal,
            sampled: e.value,
            samples: n,
        });
    }

    let mut report = report_header("correlation-scan", config);
    let _ = writeln!(report, "points: {}", points.len());
    let _ = writeln!(report, "samples_per_point: {n}");
    match fit_visibility(&points) {
        Some(fit) => {
            let _ = writeln!(report, "fitted_visibility: {:.6}", fit.visibility.value);
            let _ = writeln!(report, "fitted_std_err: {:.6}", fit.visibility.std_err);
            let _ = writeln!(
                report,
                "z_vs_injected: {:.3}",
                fit.visibility.z_score(config.visibility)
            );
            let _ = writeln!(report, "chi_square: {:.3}", fit.chi_square);
            let _ = writeln!(report, "dof: {}", fit.dof);
        }
        None => {
            let _ = writeln!(report, "fitted_visibility: none");
        }
    }
    write_file(&config.out_dir, "correlation_scan.csv", &csv)?;
    write_file(&config.out_dir, "correlation_scan.txt", &report)?;
    Ok(report)
}

fn protocol_error(e: ProtocolError) -> CliError {
    match e {
        ProtocolError::InsufficientDetections { .. }
        | ProtocolError::MissingSetting(_)
        | ProtocolError::EmptySample => CliError::Insufficient(e.to_string()),
        ProtocolError::SampleFraction(_) | ProtocolError::Source(_) | ProtocolError::Quantum(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Failed(other.to_string()),
    }
}

fn write_check(report: &mut String, check: &CheckReport) {
    let kind = match check.kind {
        qss_core::protocol::CheckKind::Qber => "qber",
        qss_core::protocol::CheckKind::Bell => "bell",
    };
    let _ = writeln!(report, "check: {kind}");
    let _ = writeln!(report, "check_sample_size: {}", check.sample_size);
    let _ = writeln!(report, "check_estimate: {:.6}", check.estimate);
    let _ = writeln!(report, "check_std_err: {:.6}", check.std_err);
    let _ = writeln!(report, "check_threshold: {:.6}", check.threshold);
    let _ = writeln!(report, "verdict: {}", check.verdict);
}

fn write_session_stats(report: &mut String, result: &SessionResult) {
    let roles = result.roles;
    let access: String = roles.access_set().iter().map(|p| p.mode()).collect();
    let _ = writeln!(report, "dealer: {}", roles.dealer().mode());
    let _ = writeln!(report, "access_set: {access}");
    let _ = writeln!(report, "windows: {}", result.stats.windows);
    let _ = writeln!(report, "detected_rounds: {}", result.stats.detected_rounds);
    let _ = writeln!(report, "sifted_bits: {}", result.sifted.len());
    let _ = writeln!(report, "bell_pool: {}", result.stats.bell_pool);
    write_check(report, &result.report);
    let _ = writeln!(report, "key_bits_after_check: {}", result.key.len());
    let _ = writeln!(report, "transcript_errors: {}", result.key.error_count(&roles));
}

fn transcript(result: &SessionResult, block: usize) -> String {
    let roles = result.roles;
    let access: Vec<String> = roles.access_set().iter().map(|p| format!("x_{}", p.letter())).collect();
    format!(
        "# sifted key after the check; x_{}S = {}\n{}",
        roles.dealer().letter(),
        access.join(" xor "),
        result.key.render_transcript(&roles, block)
    )
}

/// Full pipeline: photons → sifting and check → reconciliation → privacy
/// amplification → one-time-pad transmission.
pub fn qss_run(config: &ExperimentConfig) -> Result<String, CliError> {
    let session = config.session()?;
    let dir = &config.out_dir;
    let mut report = report_header("qss-run", config);
    let expected = match config.mode {
        CheckMode::Qber => expected_qber_under_attack(
            &session.protocol.attack,
            &BasisSchedule::new(config.mode).keying_phases(),
            config.visibility,
        )
        .ok(),
        CheckMode::Bell => None,
    };
    if let Some(q) = expected {
        let _ = writeln!(report, "expected_qber: {q:.6}");
    }

    let outcome = match run_session(&session, &SeedTree::new(config.seed)) {
        Ok(o) => o,
        Err(SessionError::Protocol(ProtocolError::Aborted(result))) => {
            write_session_stats(&mut report, &result);
            write_file(dir, "transcript.txt", transcript(&result, config.transcript_block))?;
            write_file(dir, "channel.wire", result.channel.transcript_bytes())?;
            write_file(dir, "report.txt", &report)?;
            return Err(CliError::Aborted(result.report.to_string()));
        }
        Err(SessionError::Protocol(e)) => return Err(protocol_error(e)),
        Err(SessionError::Postproc(e)) => return Err(CliError::Failed(e.to_string())),
    };

    let result = &outcome.protocol;
    write_session_stats(&mut report, result);
    let rec = &outcome.reconcile;
    let blocks: Vec<String> = rec.block_sizes.iter().map(|b| b.to_string()).collect();
    let _ = writeln!(report, "planning_qber: {:.6}", outcome.planning_qber);
    let _ = writeln!(report, "reconcile_block_sizes: {}", blocks.join(","));
    let _ = writeln!(report, "reconcile_corrected: {}", rec.corrected);
    let _ = writeln!(report, "reconcile_verification_rounds: {}", rec.verification_rounds);
    let _ = writeln!(report, "leaked_bits: {}", rec.leaked_bits);
    let _ = writeln!(report, "observed_qber: {:.6}", outcome.observed_qber);
    let _ = writeln!(report, "length_formula: {}", qss_core::postproc::LENGTH_FORMULA);
    let _ = writeln!(report, "final_key_bits: {}", outcome.dealer_key.bits().len());
    let _ = writeln!(report, "keys_agree: {}", outcome.keys_agree());
    let _ = writeln!(report, "message_bits: {}", outcome.message.len());
    let _ = writeln!(report, "message_hex: {}", outcome.message.to_hex());
    let _ = writeln!(report, "ciphertext_hex: {}", outcome.ciphertext.to_hex());
    let _ = writeln!(report, "decrypted_hex: {}", outcome.decrypted.to_hex());
    let _ = writeln!(report, "decrypt_ok: {}", outcome.decrypt_ok());
    let wire = result.channel.transcript_bytes();
    let _ = writeln!(report, "channel_messages: {}", result.channel.transcript().len());
    let _ = writeln!(report, "channel_bytes: {}", wire.len());

    let mut dealer_key = Vec::new();
    outcome.dealer_key.write_to(&mut dealer_key)?;
    let mut access_key = Vec::new();
    outcome.access_key.write_to(&mut access_key)?;
    write_file(dir, "transcript.txt", transcript(result, config.transcript_block))?;
    write_file(dir, "dealer_final.key", dealer_key)?;
    write_file(dir, "access_final.key", access_key)?;
    write_file(
        dir,
        "ciphertext.txt",
        format!(
            "# length={} one-time pad under the final key\n{}\n",
            outcome.ciphertext.len(),
            outcome.ciphertext.to_hex()
        ),
    )?;
    write_file(dir, "channel.wire", wire)?;
    write_file(dir, "report.txt", &report)?;
    if !outcome.keys_agree() || !outcome.decrypt_ok() {
        return Err(CliError::Failed("final keys disagree".into()));
    }
    Ok(report)
}

/// Bell quantity from a Bell-mode session, or from the closed form.
pub fn bell_test(config: &ExperimentConfig) -> Result<String, CliError> {
    let mut config = config.clone();
    config.mode = CheckMode::Bell;
    let protocol = config.protocol()?;
    let setting = BasisSchedule::new(CheckMode::Bell).bell_setting();
    let v = config.visibility;
    let ideal = ideal_bell_value();
    let mut report = report_header("bell-test", &config);
    let _ = writeln!(report, "classical_bound: {:.6}", config.thresholds.bell_bound);
    let _ = writeln!(report, "ideal_s: {ideal:.6}");
    let _ = writeln!(report, "predicted_s: {:.6}", v * ideal);

    let mut csv = String::from(
        "combination,k_a,k_b,k_c,k_d,phi_a_deg,phi_b_deg,phi_c_deg,phi_d_deg,e_analytic,e_sampled,stderr\n",
    );
    let table = |csv: &mut String, sampled: Option<&[Estimate; N_PATTERNS]>| {
        for combo in 0..N_PATTERNS {
            let phis = setting.combination(combo);
            let ks: Vec<String> = Party::ALL.iter().map(|p| p.bit_of(combo).to_string()).collect();
            let degs: Vec<String> = phis.iter().map(|p| format!("{:.3}", p.to_degrees())).collect();
            let e = v * correlation_analytic(phis[0], phis[1], phis[2], phis[3]);
            let _ = write!(csv, "{combo},{},{},{e:.10}", ks.join(","), degs.join(","));
            match sampled {
                Some(t) => {
                    let _ = writeln!(csv, ",{:.10},{:.10}", t[combo].value, t[combo].std_err);
                }
                None => csv.push_str(",,\n"),
            }
        }
    };

    if config.analytic {
        let s = bell_s(&setting, |a, b, c, d| v * correlation_analytic(a, b, c, d));
        table(&mut csv, None);
        let _ = writeln!(report, "s: {s:.6}");
        let _ = writeln!(report, "s_std_err: 0.000000");
        let _ = writeln!(report, "violates_bound: {}", s > config.thresholds.bell_bound);
        write_file(&config.out_dir, "bell_test.csv", &csv)?;
        write_file(&config.out_dir, "bell_test.txt", &report)?;
        return Ok(report);
    }

    let (result, aborted) = match run_protocol(&protocol, &SeedTree::new(config.seed)) {
        Ok(r) => (r, false),
        Err(ProtocolError::Aborted(r)) => (*r, true),
        Err(e) => return Err(protocol_error(e)),
    };
    let check = &result.report;
    table(&mut csv, result.bell_table.as_ref());
    let _ = writeln!(report, "windows: {}", result.stats.windows);
    let _ = writeln!(report, "bell_pool: {}", result.stats.bell_pool);
    let _ = writeln!(report, "s: {:.6}", check.estimate);
    let _ = writeln!(report, "s_std_err: {:.6}", check.std_err);
    let _ = writeln!(
        report,
        "z_vs_predicted: {:.3}",
        Estimate::new(check.estimate, check.std_err).z_score(v * ideal)
    );
    write_check(&mut report, check);
    write_file(&config.out_dir, "bell_test.csv", &csv)?;
    write_file(&config.out_dir, "bell_test.txt", &report)?;
    if aborted || check.verdict == Verdict::Abort {
        return Err(CliError::Aborted(check.to_string()));
    }
    Ok(report)
}
