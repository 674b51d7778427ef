//! End-to-end checks of the binary: exit codes, artifact files, and the
//! shipped sample configs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn fve() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fve"))
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = fve().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let out = fve()
        .args(["lookdown", "--config", "/nonexistent.toml"])
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(config_dir()).unwrap() {
        let path = entry.unwrap().path();
        fve::config::RunConfig::from_path(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn lookdown_run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = fve()
        .args([
            "lookdown",
            "--config",
            config_dir().join("lookdown.toml").to_str().unwrap(),
            "--reps",
            "3",
            "--seed",
            "7",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("trajectories.csv").exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"pooled\""));
}

#[test]
fn dual_run_exits_zero() {
    let out = fve()
        .args([
            "dual",
            "--config",
            config_dir().join("dual.toml").to_str().unwrap(),
            "--reps",
            "4",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_unknown_suite_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = std::fs::read_to_string(config_dir().join("verify.toml"))
        .unwrap()
        .replace("suite = \"all\"", "suite = \"bogus\"");
    let path = dir.path().join("verify.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = fve()
        .args(["verify", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_determinism_suite_passes_and_prints_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = std::fs::read_to_string(config_dir().join("verify.toml"))
        .unwrap()
        .replace("suite = \"all\"", "suite = \"determinism\"");
    let path = dir.path().join("verify.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = fve()
        .args(["verify", "--config", path.to_str().unwrap(), "--reps", "6"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("determinism: PASS"));
}

#[test]
fn diagnose_reads_csv_and_emits_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("atoms.csv");
    std::fs::write(&csv_path, "time,position,mass\n0.0,0.0,0.5\n0.0,1.0,0.5\n").unwrap();
    let cfg = format!(
        r#"
experiment = "diagnose"
[kernel]
family = "gaussian"
amplitude = 1.0
bandwidth = 1.0
epsilon = 0.5
[model]
gamma = 1.0
horizon = 1.0
dt_max = 0.01
input = "{}"
[initial]
law = "point"
x = 0.0
[ensemble]
n_reps = 1
master_seed = 1
"#,
        csv_path.display()
    );
    let cfg_path = dir.path().join("diag.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    let out = fve()
        .args([
            "diagnose",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.path().join("diagnostics.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed[0]["report"]["atom_statistic"], 0.5);
}
