use std::path::PathBuf;
use std::process::{Command, Output};

use tilecast::harness::CSV_HEADER;

fn tilecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilecast")).args(args).output().unwrap()
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

#[test]
fn run_writes_csv_to_stdout() {
    let cfg = config("m_sweep.toml");
    let out = tilecast(&["run", "--config", &cfg, "--trials", "1", "--scheme", "proposed-asymptotic", "--sweep", "m"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // five sweep points: one trial row plus mean and sem rows each
    assert_eq!(lines.count(), 15);
}

#[test]
fn run_then_audit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv").display().to_string();
    let cfg = config("k_sweep.toml");
    let common = ["--config", &cfg, "--trials", "2", "--seed", "5", "--scheme", "baseline-multicast"];
    assert!(tilecast(&[&["run"][..], &common, &["--out", &out]].concat()).status.success());
    let audit = tilecast(&[&["audit"][..], &common, &["--results", &out]].concat());
    assert!(audit.status.success(), "{}", String::from_utf8_lossy(&audit.stdout));

    // a different base seed no longer matches the recorded trial seeds
    let audit = tilecast(&["audit", "--config", &cfg, "--trials", "2", "--seed", "6", "--scheme", "baseline-multicast", "--results", &out]);
    assert_eq!(audit.status.code(), Some(1));
}

#[test]
fn oracle_check_passes() {
    let out = tilecast(&["oracle-check", "--seed", "3", "--trials", "20"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("ok"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("k_sweep.toml")).unwrap();
    std::fs::write(&path, format!("antenna_count = 4\n{text}")).unwrap();
    let out = tilecast(&["run", "--config", path.to_str().unwrap(), "--trials", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("antenna_count"));
}

#[test]
fn bad_flags_are_rejected() {
    let cfg = config("k_sweep.toml");
    assert!(!tilecast(&["run", "--config", &cfg, "--scheme", "nope"]).status.success());
    assert!(!tilecast(&["run", "--config", &cfg, "--sweep", "q"]).status.success());
    assert!(!tilecast(&["run", "--config", &cfg, "--trials", "0"]).status.success());
}
