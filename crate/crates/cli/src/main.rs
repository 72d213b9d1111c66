use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qss_cli::{commands, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "qss", version, about = "Four-party quantum secret sharing experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides its config-file key.
#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// qber or bell.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    visibility: Option<f64>,
    /// Acquisition windows to run (clears any target).
    #[arg(long, global = true, conflicts_with = "target_bits")]
    windows: Option<u64>,
    /// Measure until this many sifted bits.
    #[arg(long, global = true)]
    target_bits: Option<usize>,
    /// Intercept-resend on modes, e.g. `b`, `bc`, `b:0.5` or `none`.
    #[arg(long, global = true)]
    attack: Option<String>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sixteen-outcome coincidence table at fixed phases.
    Histogram {
        /// Phases of a..d, e.g. `0deg,0deg,0deg,0deg`.
        #[arg(long)]
        phases: Option<String>,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Sweep of φ_b with a visibility fit.
    CorrelationScan {
        /// Phases of a, c and d.
        #[arg(long)]
        fixed: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        start: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        stop: Option<String>,
        #[arg(long)]
        step: Option<String>,
        /// Coincidences sampled per point.
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Full session: sifting, check, reconciliation, hashing, one-time pad.
    QssRun,
    /// Bell quantity from a Bell-mode session.
    BellTest {
        /// Use the closed-form correlations instead of sampling.
        #[arg(long)]
        analytic: bool,
    },
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut config = match &cli.common.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let c = &cli.common;
    let mut overrides: Vec<(&str, String)> = Vec::new();
    if let Some(v) = c.seed {
        overrides.push(("seed", v.to_string()));
    }
    if let Some(v) = &c.mode {
        overrides.push(("mode", v.clone()));
    }
    if let Some(v) = c.visibility {
        overrides.push(("visibility", v.to_string()));
    }
    if let Some(v) = c.windows {
        overrides.push(("windows", v.to_string()));
        overrides.push(("target_bits", "none".into()));
    }
    if let Some(v) = c.target_bits {
        overrides.push(("target_bits", v.to_string()));
    }
    if let Some(v) = &c.attack {
        overrides.push(("attack", v.clone()));
    }
    if let Some(v) = &c.out_dir {
        overrides.push(("out_dir", v.display().to_string()));
    }
    match &cli.command {
        Command::Histogram { phases, samples } => {
            if let Some(v) = phases {
                overrides.push(("phases", v.clone()));
            }
            if let Some(v) = samples {
                overrides.push(("samples", v.to_string()));
            }
        }
        Command::CorrelationScan {
            fixed,
            start,
            stop,
            step,
            samples,
        } => {
            for (key, v) in [
                ("scan_fixed", fixed),
                ("scan_start", start),
                ("scan_stop", stop),
                ("scan_step", step),
            ] {
                if let Some(v) = v {
                    overrides.push((key, v.clone()));
                }
            }
            if let Some(v) = samples {
                overrides.push(("scan_samples", v.to_string()));
            }
        }
        Command::QssRun => {}
        Command::BellTest { analytic } => {
            if *analytic {
                overrides.push(("analytic", "true".into()));
            }
        }
    }
    for (key, value) in overrides {
        config
            .set(key, &value)
            .map_err(|e| CliError::Config(format!("--{}: {}", key.replace('_', "-"), e.message())))?;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let config = build_config(cli)?;
    match cli.command {
        Command::Histogram { .. } => commands::histogram(&config),
        Command::CorrelationScan { .. } => commands::correlation_scan(&config),
        Command::QssRun => commands::qss_run(&config),
        Command::BellTest { .. } => commands::bell_test(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qss: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
