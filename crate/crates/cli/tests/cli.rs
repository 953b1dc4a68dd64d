//! End-to-end command tests against the built binary: exit codes, artifact
//! determinism, and output format.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dwellcert")
}

fn repo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/two_mode.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn")
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dwellcert-cli-{name}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_patched_config(name: &str, patch: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(repo_config()).unwrap()).unwrap();
    patch(&mut value);
    let path = temp_dir("cfg").join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
    path
}

#[test]
fn certify_writes_summary_and_json() {
    let dir = temp_dir("certify");
    let out = dir.join("cert.json");
    let cfg = repo_config();
    let output = run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--grid",
        "64",
    ]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("tau_a_min"));
    assert!(stdout.contains("N_int"));
    let cert: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(cert["N"], 11);
    assert_eq!(cert["grid_points"], 64);
    assert_eq!(cert["modes"][0]["eta_p"], 2);
    assert!(cert["modes"][0]["P_p"].is_array());
    assert!(cert["pairs"][0]["delta_bar"].is_array());
    for key in ["eta", "nu", "nu_bar", "tau_a_min"] {
        assert!(!cert[key].is_null(), "missing {key}");
    }
}

#[test]
fn certify_exit_2_when_alphabet_too_small() {
    let cfg = write_patched_config("n3", |v| {
        v["quantizer"]["N"] = serde_json::json!(3);
    });
    let out = temp_dir("certify2").join("cert.json");
    let output = run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--grid",
        "16",
    ]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("mode 1"), "{stderr}");
    assert!(stderr.contains("data rate insufficient"), "{stderr}");
}

#[test]
fn unknown_config_key_is_rejected_with_path() {
    let cfg = write_patched_config("unknown", |v| {
        v["extra_block"] = serde_json::json!({});
    });
    let out = temp_dir("certify3").join("cert.json");
    let output = run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("extra_block"), "{stderr}");
}

#[test]
fn simulate_reports_stage_times_and_is_deterministic() {
    let dir_a = temp_dir("sim-a");
    let dir_b = temp_dir("sim-b");
    let cfg = repo_config();
    for dir in [&dir_a, &dir_b] {
        let output = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            dir.to_str().unwrap(),
            "--grid",
            "256",
        ]);
        assert!(output.status.success(), "{output:?}");
        let stdout = String::from_utf8(output.stdout).unwrap();
        assert!(stdout.contains("zoom_out_end     = 1"), "{stdout}");
        assert!(stdout.contains("first_nonzero_u  = 2"), "{stdout}");
    }
    for name in ["trajectory.csv", "symbols.csv", "invariants.json"] {
        let a = fs::read(dir_a.join(name)).unwrap();
        let b = fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let header = fs::read_to_string(dir_a.join("trajectory.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "t,x1,x2,xi1,xi2,e_inf,E,plant_mode,ctrl_mode,stage,V");
    let symbols = fs::read_to_string(dir_a.join("symbols.csv")).unwrap();
    assert!(symbols.starts_with("k,t,mode,payload_kind,payload_value"));
    let inv: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir_a.join("invariants.json")).unwrap()).unwrap();
    assert_eq!(inv["dominance_ok"], true);
    assert_eq!(inv["cycle_ok"], true);
    assert_eq!(inv["switch_ok"], true);
    assert!(dir_a.join("plot_trajectory.py").exists());
}

#[test]
fn simulate_rejects_dwell_violation_with_witness() {
    let cfg = write_patched_config("dwell", |v| {
        v["signal"] = serde_json::json!({
            "sigma0": 1,
            "events": [{"t": 1.0, "mode": 2}, {"t": 1.2, "mode": 1}],
            "horizon": 20.0,
            "N0": 1,
            "tau_a": 5.8
        });
    });
    let output = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        temp_dir("sim-bad").to_str().unwrap(),
        "--grid",
        "16",
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("1.2"), "{stderr}");
}

#[test]
fn simulate_rejects_generator_tau_a_below_zoom_out_floor() {
    let cfg = write_patched_config("lowta", |v| {
        v["signal"] = serde_json::json!({
            "generator": {
                "seed": 7, "dwell_min": 2.6, "N0": 1, "tau_a": 0.9, "horizon": 20.0
            }
        });
    });
    let output = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        temp_dir("sim-lowta").to_str().unwrap(),
        "--grid",
        "16",
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("tau_a > eta*tau_s"), "{stderr}");
}

#[test]
fn validate_signal_pass_and_fail() {
    let output = run(&["validate-signal", "--config", repo_config().to_str().unwrap()]);
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("admissible"), "{stdout}");

    let cfg = write_patched_config("vs-bad", |v| {
        v["signal"]["events"] = serde_json::json!([
            {"t": 1.0, "mode": 2}, {"t": 1.2, "mode": 1}
        ]);
    });
    let output = run(&["validate-signal", "--config", cfg.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("dwell violation"), "{stdout}");
}

#[test]
fn sweep_over_alphabet_writes_rows() {
    let out = temp_dir("sweep").join("sweep.csv");
    let output = run(&[
        "sweep",
        "--config",
        repo_config().to_str().unwrap(),
        "--param",
        "N",
        "--values",
        "9,11,15",
        "--out",
        out.to_str().unwrap(),
        "--grid",
        "64",
        "--quiet",
    ]);
    assert!(output.status.success(), "{output:?}");
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "param,value,nu,nu_bar,tau_a_min");
    assert_eq!(lines.len(), 4);
    let tau: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert!(tau[0] > tau[1] && tau[1] > tau[2], "not decreasing: {tau:?}");
}

#[test]
fn sweep_rejects_empty_values() {
    let out = temp_dir("sweep-empty").join("sweep.csv");
    let output = run(&[
        "sweep",
        "--config",
        repo_config().to_str().unwrap(),
        "--param",
        "N",
        "--values",
        "",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "{output:?}");
}

#[test]
fn sweep_over_grid_shows_convergence() {
    let out = temp_dir("sweep-grid").join("sweep.csv");
    let output = run(&[
        "sweep",
        "--config",
        repo_config().to_str().unwrap(),
        "--param",
        "grid",
        "--values",
        "64,128,256",
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(output.status.success(), "{output:?}");
    let csv = fs::read_to_string(&out).unwrap();
    let nu_bar: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(nu_bar[1] >= nu_bar[0] && nu_bar[2] >= nu_bar[1]);
    let gap = (nu_bar[2] - nu_bar[1]) / nu_bar[2];
    assert!(gap <= 1e-4, "grid gap {gap}");
}
