use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qss(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qss"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn report_value(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("report lacks {key}"))
        .to_string()
}

#[test]
fn every_subcommand_is_byte_reproducible() {
    let runs: [&[&str]; 4] = [
        &["histogram", "--samples", "20000", "--seed", "5"],
        &[
            "correlation-scan",
            "--visibility",
            "0.9",
            "--samples",
            "200",
            "--seed",
            "5",
        ],
        &["qss-run", "--visibility", "0.9", "--target-bits", "1000", "--seed", "5"],
        &["bell-test", "--visibility", "0.9", "--windows", "20000", "--seed", "5"],
    ];
    for args in runs {
        let (d1, d2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
        let o1 = qss(args, d1.path());
        let o2 = qss(args, d2.path());
        assert_eq!(o1.status.code(), o2.status.code(), "{args:?}");
        assert_eq!(o1.stdout, o2.stdout, "{args:?}");
        let (f1, f2) = (files(d1.path()), files(d2.path()));
        assert!(!f1.is_empty(), "{args:?} wrote nothing");
        assert_eq!(f1, f2, "{args:?}");
    }
}

#[test]
fn seeds_change_the_output() {
    let (d1, d2) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    qss(&["histogram", "--samples", "1000", "--seed", "1"], d1.path());
    qss(&["histogram", "--samples", "1000", "--seed", "2"], d2.path());
    assert_ne!(files(d1.path())["histogram.csv"], files(d2.path())["histogram.csv"]);
}

#[test]
fn analytic_histogram_has_six_bins() {
    let d = TempDir::new().unwrap();
    let out = qss(
        &["histogram", "--samples", "0", "--phases", "0deg,0rad,0deg,0deg"],
        d.path(),
    );
    assert!(out.status.success());
    let csv = String::from_utf8(files(d.path())["histogram.csv"].clone()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("pattern,bits,label,analytic_prob"));
    let probs: BTreeMap<String, f64> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].to_string(), f[3].parse().unwrap())
        })
        .filter(|(_, p)| *p > 1e-12)
        .collect();
    let expected = [
        ("HHVV", 1.0 / 3.0),
        ("VVHH", 1.0 / 3.0),
        ("HVHV", 1.0 / 12.0),
        ("HVVH", 1.0 / 12.0),
        ("VHHV", 1.0 / 12.0),
        ("VHVH", 1.0 / 12.0),
    ];
    assert_eq!(probs.len(), 6);
    for (label, p) in expected {
        assert!((probs[label] - p).abs() < 1e-9, "{label}");
    }
}

#[test]
fn noiseless_scan_starts_at_one() {
    let d = TempDir::new().unwrap();
    let out = qss(
        &[
            "correlation-scan",
            "--samples",
            "0",
            "--step",
            "90deg",
            "--stop",
            "360deg",
        ],
        d.path(),
    );
    assert!(out.status.success());
    let csv = String::from_utf8(files(d.path())["correlation_scan.csv"].clone()).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[4][1], "360.000000");
}

#[test]
fn noiseless_session_has_clean_xor_row() {
    let d = TempDir::new().unwrap();
    let out = qss(&["qss-run", "--target-bits", "500"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    assert_eq!(report_value(&report, "transcript_errors"), "0");
    assert_eq!(report_value(&report, "keys_agree"), "true");
    assert_eq!(report_value(&report, "decrypt_ok"), "true");
    let f = files(d.path());
    assert_eq!(f["dealer_final.key"], f["access_final.key"]);
    let transcript = String::from_utf8(f["transcript.txt"].clone()).unwrap();
    assert!(transcript
        .lines()
        .filter(|l| l.starts_with("err"))
        .all(|l| l.trim() == "err"));
}

#[test]
fn config_file_and_flag_precedence() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(
        &cfg,
        "# bell test\nvisibility = 0.5\nseed = 3\nrate = 20\nwindows = 2000\n",
    )
    .unwrap();
    let out_dir = d.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_qss"))
        .args(["bell-test", "--analytic", "--visibility", "0.8", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("visibility = 0.8\n"));
    assert!(report.contains("seed = 3\n"));
    let s: f64 = report_value(&report, "s").parse().unwrap();
    assert!((s - 0.8 * 1.885618).abs() < 1e-5);
}

#[test]
fn exit_codes() {
    let d = TempDir::new().unwrap();
    let code = |args: &[&str]| qss(args, d.path()).status.code();
    assert_eq!(code(&["qss-run", "--visibility", "1.5"]), Some(2));
    assert_eq!(code(&["qss-run", "--attack", "z"]), Some(2));
    assert_eq!(code(&["histogram", "--phases", "0,0,0,0"]), Some(2));
    assert_eq!(code(&["qss-run", "--attack", "b", "--target-bits", "2000"]), Some(3));
    assert_eq!(code(&["qss-run", "--windows", "3"]), Some(4));
    assert_eq!(code(&["bell-test", "--windows", "3"]), Some(4));
    let missing = d.path().join("absent.cfg");
    assert_eq!(code(&["histogram", "--config", missing.to_str().unwrap()]), Some(2));
}

#[test]
fn abort_still_writes_the_report() {
    let d = TempDir::new().unwrap();
    let out = qss(
        &["qss-run", "--attack", "b", "--target-bits", "2000", "--seed", "4"],
        d.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let report = String::from_utf8(files(d.path())["report.txt"].clone()).unwrap();
    assert_eq!(report_value(&report, "verdict"), "abort");
    assert_eq!(report_value(&report, "expected_qber"), "0.250000");
    assert!(!files(d.path()).contains_key("dealer_final.key"));
}
