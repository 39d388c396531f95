//! Harness-level behaviors: exit codes, config diagnostics, report parsing
//! and the property-suite ledger.

use std::path::PathBuf;
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_porohom")
}

fn tmp_out(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("porohom-cli-{tag}-{}", std::process::id()))
}

#[test]
fn missing_config_is_a_config_error() {
    let out = Command::new(bin()).arg("cell").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn indefinite_coefficient_rejected_with_code_two() {
    let out = Command::new(bin())
        .args(["effective", "--config", fixture("badspd.toml").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("coercivity"), "diagnostic: {msg}");
}

#[test]
fn unparseable_config_names_the_problem() {
    let dir = tmp_out("badtoml");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("broken.toml");
    std::fs::write(&path, "dimension = \"two\"\n").unwrap();
    let out = Command::new(bin())
        .args(["cell", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn laminate_report_contains_harmonic_mean() {
    let dir = tmp_out("laminate");
    let out = Command::new(bin())
        .args([
            "effective",
            "--config",
            fixture("laminate1d.toml").to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report = std::fs::read_to_string(dir.join("effective_report.txt")).unwrap();
    let c0: f64 = report
        .lines()
        .skip_while(|l| !l.starts_with("C0"))
        .nth(1)
        .and_then(|l| l.trim().parse().ok())
        .expect("report carries the stiffness entry");
    assert!((c0 - 1.6).abs() / 1.6 < 0.01, "effective coefficient {c0}");

    // the report subcommand reparses the machine-readable form
    let out = Command::new(bin())
        .args([
            "report",
            "--model",
            dir.join("effective.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("density rho0"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn fine_rejects_unresolved_time_step() {
    let dir = tmp_out("unresolved");
    // kernel oscillates once per unit fast time; dt = eps would under-sample
    let cfg = std::fs::read_to_string(fixture("study.toml"))
        .unwrap()
        .replace("dt = 0.0078125", "dt = 0.0625");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("unresolved.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = Command::new(bin())
        .args([
            "fine",
            "--config",
            path.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--epsilon",
            "0.25",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("under-resolves"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn nonconforming_epsilon_is_a_config_error() {
    let dir = tmp_out("nonconforming");
    let out = Command::new(bin())
        .args([
            "fine",
            "--config",
            fixture("tiny.toml").to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--epsilon",
            "0.3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not tile"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn macro_consumes_a_stored_model() {
    let dir = tmp_out("storedmodel");
    let cfg = fixture("tiny.toml");
    let run = |args: &[&str]| {
        let out = Command::new(bin()).args(args).output().unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["effective", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    let model = dir.join("effective.csv");
    run(&[
        "macro",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ]);
    assert!(dir.join("macro_trajectory.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn props_ledger_exits_clean_and_writes_csv() {
    let dir = tmp_out("props");
    let out = Command::new(bin())
        .args([
            "props",
            "--config",
            fixture("tiny.toml").to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            "11",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let ledger = std::fs::read_to_string(dir.join("properties.csv")).unwrap();
    assert!(ledger.lines().count() > 20, "ledger too short:\n{ledger}");
    assert!(!ledger.contains(",FAIL,"), "ledger has failures:\n{ledger}");
    assert!(ledger.contains("harness.config_round_trip,pass"));
    assert!(ledger.contains("harness.bitwise_reproducible,pass"));
    std::fs::remove_dir_all(&dir).ok();
}
