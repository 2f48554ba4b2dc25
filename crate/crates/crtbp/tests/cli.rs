//! Black-box tests of the command-line binary: exit codes, output
//! artifacts, determinism, and thread-count handling.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_crtbp-reach")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("crtbp-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_cli(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

const LAGRANGE: &str = r#"{ "scenario": "lagrange", "system": { "mu": 0.0125 } }"#;

#[test]
fn lagrange_run_succeeds_and_writes_manifest() {
    let dir = tmp("lagrange");
    let cfg = write_config(&dir, LAGRANGE);
    let out = dir.join("out");
    let result = run_cli(
        &["lagrange", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    for f in ["lagrange.json", "lagrange.svg", "manifest.json"] {
        let meta = std::fs::metadata(out.join(f)).unwrap();
        assert!(meta.len() > 0, "{f} missing or empty");
    }
}

#[test]
fn repeated_runs_hash_identically_and_svg_is_byte_stable() {
    let dir = tmp("determinism");
    let cfg = write_config(&dir, LAGRANGE);
    let (a, b) = (dir.join("a"), dir.join("b"));
    for out in [&a, &b] {
        let result = run_cli(
            &["lagrange", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
            &[],
        );
        assert!(result.status.success());
    }
    let manifest = |p: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(p.join("manifest.json")).unwrap()).unwrap()
    };
    assert_eq!(manifest(&a)["content_hash"], manifest(&b)["content_hash"]);
    assert_eq!(
        std::fs::read(a.join("lagrange.svg")).unwrap(),
        std::fs::read(b.join("lagrange.svg")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = tmp("config-errors");
    // Out-of-range mass ratio.
    let bad_mu = write_config(&dir, r#"{ "scenario": "lagrange", "system": { "mu": 0.6 } }"#);
    let result = run_cli(&["lagrange", "--config", bad_mu.to_str().unwrap()], &[]);
    assert_eq!(result.status.code(), Some(2));
    let err = String::from_utf8_lossy(&result.stderr);
    assert!(err.contains("system.mu"), "{err}");

    // Empty file lists the required fields.
    let empty = dir.join("empty.json");
    std::fs::write(&empty, "").unwrap();
    let result = run_cli(&["lagrange", "--config", empty.to_str().unwrap()], &[]);
    assert_eq!(result.status.code(), Some(2));
    let err = String::from_utf8_lossy(&result.stderr);
    assert!(err.contains("scenario") && err.contains("system.mu"), "{err}");

    // Missing file.
    let result = run_cli(&["lagrange", "--config", "/nonexistent/x.json"], &[]);
    assert_eq!(result.status.code(), Some(2));

    // Scenario mismatch between command line and config.
    let cfg = write_config(&dir, LAGRANGE);
    let result = run_cli(&["orbit", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(result.status.code(), Some(2));
    let err = String::from_utf8_lossy(&result.stderr);
    assert!(err.contains("mismatch"), "{err}");
}

#[test]
fn solver_failure_exits_3() {
    let dir = tmp("solver-failure");
    // An immediate collision: start on top of the secondary.
    let cfg = write_config(
        &dir,
        r#"{
            "scenario": "simulate",
            "system": { "mu": 0.0125 },
            "simulate": { "initial_state": [0.9875, 0.0, 0.0, 0.0], "tf": 1.0 }
        }"#,
    );
    let out = dir.join("out");
    let result = run_cli(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(result.status.code(), Some(3), "{}", String::from_utf8_lossy(&result.stderr));
}

#[test]
fn thread_flag_and_env_override() {
    let dir = tmp("threads");
    let cfg = write_config(&dir, LAGRANGE);
    let out = dir.join("out");
    // --threads 0 is rejected as a config error.
    let result = run_cli(
        &["lagrange", "--config", cfg.to_str().unwrap(), "--threads", "0"],
        &[],
    );
    assert_eq!(result.status.code(), Some(2));
    // CRTBP_THREADS overrides the invalid flag value.
    let result = run_cli(
        &[
            "lagrange",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            "0",
        ],
        &[("CRTBP_THREADS", "2")],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
}

#[test]
fn simulate_run_writes_csv_and_svg() {
    let dir = tmp("simulate");
    let cfg = write_config(
        &dir,
        r#"{
            "scenario": "simulate",
            "system": { "mu": 0.0125 },
            "simulate": { "initial_state": [0.8156, 0.0, 0.0, 0.1922], "tf": 2.0, "compare_rk4": true }
        }"#,
    );
    let out = dir.join("out");
    let result = run_cli(
        &["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--verbose"],
        &[],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,vx,vy,ux,uy\n"));
    assert_eq!(csv.lines().count(), 2002);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("simulate.json")).unwrap()).unwrap();
    assert!(summary["rk4_max_deviation"].is_number());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("simulate"), "verbose output missing: {stderr}");
}

#[test]
fn manifold_run_writes_trajectories_and_crossings() {
    let dir = tmp("manifold");
    let cfg = write_config(
        &dir,
        r#"{
            "scenario": "manifold",
            "system": { "mu": 0.0125 },
            "manifold": {
                "orbit": { "initial_x": { "value": 0.8156 } },
                "kind": "unstable",
                "epsilon": 1e-4,
                "n_trajectories": 4,
                "t_max": 6.0,
                "sign": 1.0,
                "min_time": 0.3,
                "section": { "alpha_d": 0.0, "window": [0.05, 0.45] }
            }
        }"#,
    );
    let out = dir.join("out");
    let result = run_cli(
        &["manifold", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifold.json")).unwrap()).unwrap();
    assert_eq!(summary["n_trajectories"].as_u64(), Some(4));
    assert!(summary["n_hits"].as_u64().unwrap() >= 1);
    let crossings = std::fs::read_to_string(out.join("manifold_crossings.csv")).unwrap();
    assert!(crossings.starts_with("t,x,y,vx,vy,branch_id\n"));
    assert!(out.join("manifold_trajectories.csv").exists());
    assert!(out.join("manifold.svg").exists());
}

#[test]
fn reach_run_writes_sweep_csv_and_polygon() {
    let dir = tmp("reach");
    let cfg = write_config(
        &dir,
        r#"{
            "scenario": "reach",
            "system": { "mu": 0.0125, "u_max": 0.1 },
            "reach": { "initial_state": [0.8156, 0.0, 0.0, 0.1922], "tf": 1.4, "n_angles": 8 }
        }"#,
    );
    let out = dir.join("out");
    let result = run_cli(
        &["reach", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let csv = std::fs::read_to_string(out.join("reach.csv")).unwrap();
    assert!(csv.starts_with("theta,x,xdot,converged\n"));
    assert_eq!(csv.lines().count(), 9);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("reach.json")).unwrap()).unwrap();
    assert!(summary["n_converged"].as_u64().unwrap() >= 4);
    assert!(summary["area"].as_f64().unwrap() > 0.0);
    assert!(out.join("reach.svg").exists());
}

#[test]
fn transfer_run_writes_design_summary_and_overlay() {
    let dir = tmp("transfer");
    let cfg = write_config(
        &dir,
        r#"{
            "scenario": "transfer",
            "system": { "mu": 0.0125, "u_max": 0.9 },
            "reach": { "initial_state": [0.8156, 0.0, 0.0, 0.1922], "tf": 1.4 },
            "transfer": { "target_state": [1.05, 0.0, 0.0, 0.35] }
        }"#,
    );
    let out = dir.join("out");
    let result = run_cli(
        &["transfer", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("transfer.json")).unwrap()).unwrap();
    assert!(summary["terminal_error"].as_f64().unwrap() <= 1e-6);
    assert!(summary["peak_thrust"].as_f64().unwrap() <= 0.9 + 1e-9);
    assert!((summary["time_of_flight"].as_f64().unwrap() - 1.4).abs() < 1e-9);
    let overlay = std::fs::read_to_string(out.join("section.svg")).unwrap();
    assert!(overlay.contains("intersection"));
    let csv = std::fs::read_to_string(out.join("transfer.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,vx,vy,ux,uy\n"));
    assert_eq!(csv.lines().count(), 1402);
}

#[test]
fn orbit_run_reports_monodromy() {
    let dir = tmp("orbit");
    let cfg = write_config(
        &dir,
        r#"{
            "scenario": "orbit",
            "system": { "mu": 0.0125 },
            "orbit": { "target": { "initial_x": { "value": 0.8156 } } }
        }"#,
    );
    let out = dir.join("out");
    let result = run_cli(
        &["orbit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let orbit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("orbit.json")).unwrap()).unwrap();
    assert!(orbit["lambda_unstable"].as_f64().unwrap() > 1.0);
    assert!((orbit["period"].as_f64().unwrap() - 2.815).abs() < 0.05);
}
