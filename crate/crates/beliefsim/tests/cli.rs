//! End-to-end checks of the binary: flag handling, config validation exit
//! codes, and output shape.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_beliefsim")
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("beliefsim_cli_{}_{name}", std::process::id()))
}

#[test]
fn unknown_config_key_exits_nonzero_with_one_line() {
    let out = Command::new(bin())
        .args(["--set", "nope.key=1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
}

#[test]
fn invalid_parameters_exit_nonzero() {
    let out = Command::new(bin())
        .args(["--set", "model.sigma_d=0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sigma_d"), "stderr: {stderr}");
}

#[test]
fn unstable_grid_is_rejected_up_front() {
    let out = Command::new(bin())
        .args(["--experiment", "paths", "--set", "grid.dt=2", "--set", "grid.t=10"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unstable"), "stderr: {stderr}");
}

#[test]
fn empty_config_file_runs_with_defaults() {
    let dir = tmp("defaults");
    let cfg = dir.join("empty.conf");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(&cfg, "").unwrap();
    // Keep it quick: tiny horizon, paths experiment.
    let out = Command::new(bin())
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--experiment",
            "paths",
            "--set",
            "grid.t=5",
            "--out",
            dir.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.join("out/paths_mean_reverting.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "t,mu,log_d,mu_r,mu_i_zeta0,mu_i_zeta_pos1,mu_i_zeta_neg1"
    );
    assert!(csv.lines().count() > 100);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn svg_flag_emits_charts() {
    let dir = tmp("svg");
    let out = Command::new(bin())
        .args([
            "--experiment",
            "paths",
            "--svg",
            "--set",
            "grid.t=5",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let svg = std::fs::read_to_string(dir.join("paths_mean_reverting.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn critical_zeta_prints_thresholds() {
    let dir = tmp("cz");
    let out = Command::new(bin())
        .args(["--experiment", "critical-zeta", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("zeta1"), "stdout: {stdout}");
    assert!(stdout.contains("zeta4"), "stdout: {stdout}");
    let csv = std::fs::read_to_string(dir.join("critical_zeta.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("zeta2,")));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn seed_flag_changes_outputs_and_is_recorded() {
    let d1 = tmp("seed1");
    let d2 = tmp("seed2");
    for (dir, seed) in [(&d1, "1"), (&d2, "2")] {
        let out = Command::new(bin())
            .args([
                "--experiment",
                "paths",
                "--set",
                "grid.t=5",
                "--seed",
                seed,
                "--out",
                dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = std::fs::read(d1.join("paths_mean_reverting.csv")).unwrap();
    let b = std::fs::read(d2.join("paths_mean_reverting.csv")).unwrap();
    assert_ne!(a, b, "different seeds must change the trajectory");
    let manifest = std::fs::read_to_string(d1.join("run_manifest.txt")).unwrap();
    assert!(manifest.contains("grid.seed = 1"));
    assert!(manifest.contains("# checksum: paths_mean_reverting.csv fnv1a64:"));
    let _ = std::fs::remove_dir_all(&d1);
    let _ = std::fs::remove_dir_all(&d2);
}
