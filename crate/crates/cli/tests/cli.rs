//! End-to-end tests of the `starkecho` binary: exit codes, artifact layout,
//! and rerun reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_starkecho"))
}

/// A small, fast configuration with the coupling pinned (no calibration run).
const FAST_CFG: &str = "\
[grid]
n_z = 40
t_step_us = 0.05
n_detune = 33
detune_half_width_khz = 16

[coupling]
eta_per_mm = 0.04

[pulse]
duration_us = 1
area_rad = 0.1

[protocol]
tau_us = 4
settle_us = 6
observe_us = 30
";

fn write_cfg(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("fast.cfg");
    std::fs::write(&path, FAST_CFG).unwrap();
    path
}

fn run_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    run_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "fid",
        "broaden",
        "echo",
        "crib-backward",
        "sweep-delay",
        "sweep-area",
        "calibrate",
    ] {
        assert!(text.contains(sub), "help missing {sub}");
    }
}

#[test]
fn invalid_config_exits_two_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[grid]\nn_z = fish\nwidth_khz = 1\n").unwrap();
    let out = bin()
        .args(["fid", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
    assert!(err.contains("grid.n_z"), "stderr: {err}");
    assert!(err.contains("line 3"), "stderr: {err}");
}

#[test]
fn missing_config_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["fid", "--config", "/definitely/not/here.cfg", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not/here.cfg"));
}

#[test]
fn bad_flag_value_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["echo", "--mode", "banana", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--mode") && err.contains("banana"), "{err}");
}

#[test]
fn oversized_step_exits_two_and_names_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    // 25 V broadening makes max|δ| ≈ 6.7 rad/µs; 0.5 µs steps cannot resolve it.
    let out = bin()
        .args(["fid", "--t-step-us", "0.5", "--voltage", "25", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("maximum"), "{err}");
}

#[test]
fn fid_writes_trace_and_manifest_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let run = |out: &Path| {
        let o = bin()
            .args(["fid", "--voltage", "0", "--config"])
            .arg(&cfg)
            .arg("--out-dir")
            .arg(out)
            .output()
            .unwrap();
        run_ok(&o);
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a);
    run(&b);

    let trace_a = std::fs::read(a.join("fid_trace.csv")).unwrap();
    let trace_b = std::fs::read(b.join("fid_trace.csv")).unwrap();
    assert_eq!(trace_a, trace_b, "trace CSV differs between reruns");

    let strip = |p: &Path| -> String {
        std::fs::read_to_string(p.join("manifest.json"))
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_time"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a), strip(&b), "manifest differs beyond wall_time");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fid");
    assert_eq!(manifest["solver_resolution"][0], 40);
    for name in manifest["outputs"].as_array().unwrap() {
        assert!(a.join(name.as_str().unwrap()).is_file());
    }
    // The trace actually carries the decaying output field.
    let text = String::from_utf8(trace_a).unwrap();
    assert!(text.lines().nth(2).is_some());
    assert!(text.lines().any(|l| l.starts_with("time_us")));
}

#[test]
fn echo_metrics_json_has_exactly_the_contract_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let out_dir = dir.path().join("out");
    let o = bin()
        .args(["echo", "--tau-us", "4", "--voltage", "25", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    run_ok(&o);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("echo_metrics.json")).unwrap())
            .unwrap();
    let obj = metrics.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(|s| s.as_str()).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        vec!["echo_energy", "efficiency", "fidelity", "peak_time_us", "tbp"]
    );
    // Echo of a 1 µs pulse stored for 4 µs peaks near 0.5 + 2·4 = 8.5 µs.
    let peak = obj["peak_time_us"].as_f64().unwrap();
    assert!((peak - 8.5).abs() < 0.3, "peak at {peak}");
}

#[test]
fn sweep_delay_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let out_dir = dir.path().join("out");
    let o = bin()
        .args(["sweep-delay", "--taus", "3,4,5", "--voltage", "25", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    run_ok(&o);
    let text = std::fs::read_to_string(out_dir.join("sweep_delay.csv")).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(data[0].starts_with("tau_us,peak_time_us"));
    assert_eq!(data.len(), 4, "header + 3 rows:\n{text}");
    for (row, tau) in data[1..].iter().zip([3.0, 4.0, 5.0]) {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells[0], tau);
        let expect = 0.5 + 2.0 * tau;
        assert!((cells[1] - expect).abs() < 0.3, "row {row}");
    }
}

#[test]
fn sweep_rejects_malformed_lists() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["sweep-area", "--areas", "0.1:0.5", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn broaden_tabulates_requested_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let out_dir = dir.path().join("out");
    let o = bin()
        .args([
            "broaden",
            "--voltage",
            "25",
            "--points",
            "101",
            "--f-min-khz",
            "-1200",
            "--f-max-khz",
            "1200",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    run_ok(&o);
    let text = std::fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    assert!(text.contains("broadened_span_khz: 2100"));
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 102); // header + 101 samples
}

#[test]
fn calibrate_reports_coupling_that_hits_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path());
    let out_dir = dir.path().join("out");
    let o = bin()
        .args(["calibrate", "--depth", "0.3", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    run_ok(&o);
    let cal: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("calibration.json")).unwrap())
            .unwrap();
    assert_eq!(cal["target_depth"], 0.3);
    let measured = cal["measured_depth"].as_f64().unwrap();
    assert!((measured - 0.3).abs() < 0.3 * 5e-3, "measured {measured}");
    assert!(cal["eta_per_mm"].as_f64().unwrap() > 0.0);
}
