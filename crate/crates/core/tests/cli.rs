use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hybridloc::ScenarioConfig;
use serde_json::Value;

fn hybridloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridloc"))
        .args(args)
        .output()
        .unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut ScenarioConfig)) -> PathBuf {
    let mut cfg = ScenarioConfig::pedestrian();
    cfg.trajectory.duration = 60;
    edit(&mut cfg);
    let path = dir.join("scenario.toml");
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |_| {});
    let out = tmp.path().join("sim");
    let o = hybridloc(&[
        "simulate",
        "--config",
        path_str(&cfg),
        "--seed",
        "4",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.toml", "scenario.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["command"], "simulate");
}

#[test]
fn run_from_simulated_csv_matches_direct_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |_| {});
    let (sim, direct, replay) = (
        tmp.path().join("sim"),
        tmp.path().join("a"),
        tmp.path().join("b"),
    );
    assert!(hybridloc(&[
        "simulate",
        "--config",
        path_str(&cfg),
        "--seed",
        "9",
        "--out",
        path_str(&sim)
    ])
    .status
    .success());
    assert!(hybridloc(&[
        "run",
        "--config",
        path_str(&cfg),
        "--seed",
        "9",
        "--out",
        path_str(&direct)
    ])
    .status
    .success());
    let csv = sim.join("scenario.csv");
    let o = hybridloc(&[
        "run",
        "--config",
        path_str(&cfg),
        "--input",
        path_str(&csv),
        "--seed",
        "9",
        "--out",
        path_str(&replay),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (a, b) = (report(&direct), report(&replay));
    let ate = |r: &Value| r["metrics"]["ate"].as_f64().unwrap();
    assert!(
        (ate(&a) - ate(&b)).abs() < 1e-6,
        "{} vs {}",
        ate(&a),
        ate(&b)
    );
}

#[test]
fn layer_flags_are_reported_and_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |_| {});
    let base = [
        "run",
        "--config",
        path_str(&cfg),
        "--seed",
        "2",
        "--filter",
        "ekf",
    ];
    let run = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let args: Vec<&str> = base
            .iter()
            .copied()
            .chain(extra.iter().copied())
            .chain(["--out", path_str(&out)])
            .collect();
        assert!(hybridloc(&args).status.success());
        report(&out)
    };
    let full = run("full", &[]);
    let no_smooth = run("no_smooth", &["--no-smooth"]);
    let no_gate = run("no_gate", &["--no-gating"]);
    assert_eq!(full["layers"]["gating"], true);
    assert_eq!(no_smooth["layers"]["smoothing"], false);
    assert_eq!(no_gate["layers"]["gating"], false);
    assert_eq!(no_gate["gate_rejection_rate"], 0.0);
    // switching off only the smoother leaves the forward pass untouched
    assert_eq!(full["filtered_metrics"], no_smooth["filtered_metrics"]);
    assert_eq!(no_smooth["metrics"], no_smooth["filtered_metrics"]);
}

#[test]
fn compare_writes_one_row_per_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |c| c.trajectory.duration = 30);
    let out = tmp.path().join("cmp");
    let o = hybridloc(&[
        "compare",
        "--config",
        path_str(&cfg),
        "--seeds",
        "0..3",
        "--variants",
        "ekf,hybrid",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("compare.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("ekf,3,"));
    assert!(rows[1].starts_with("hybrid,3,"));
}

#[test]
fn presets_resolve() {
    let tmp = tempfile::tempdir().unwrap();
    for p in ["pedestrian", "vehicular", "accelerating"] {
        let out = tmp.path().join(p);
        let o = hybridloc(&[
            "simulate",
            "--config",
            &format!("preset:{p}"),
            "--out",
            path_str(&out),
        ]);
        assert!(
            o.status.success(),
            "{p}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |c| {
        c.pipeline.v_lm = 25.0;
        c.pipeline.v_hm = 20.0;
    });
    let o = hybridloc(&[
        "run",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&tmp.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("v_lm") && err.contains("v_hm"), "{err}");
}

#[test]
fn malformed_inputs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = \"zero\"\n").unwrap();
    let out = tmp.path().join("x");
    assert_eq!(
        hybridloc(&[
            "simulate",
            "--config",
            path_str(&bad),
            "--out",
            path_str(&out)
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        hybridloc(&["run", "--config", "preset:nowhere", "--out", path_str(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        hybridloc(&[
            "run",
            "--config",
            "preset:pedestrian",
            "--filter",
            "kalman",
            "--out",
            path_str(&out)
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn numerical_failure_exits_3_and_keeps_partial_log() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |c| c.pipeline.init.position_var = 1e308);
    let out = tmp.path().join("x");
    let o = hybridloc(&[
        "run",
        "--config",
        path_str(&cfg),
        "--filter",
        "ukf",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(out.join("epochs.csv").exists());
    assert!(out.join("manifest.json").exists());
    assert!(!out.join("report.json").exists());
}

#[test]
fn flat_mode_pins_height() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), |_| {});
    let out = tmp.path().join("flat");
    assert!(hybridloc(&[
        "run",
        "--config",
        path_str(&cfg),
        "--flat",
        "--out",
        path_str(&out)
    ])
    .status
    .success());
    let text = fs::read_to_string(out.join("epochs.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let z_col = rows
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "z")
        .unwrap();
    let heights: Vec<f64> = rows
        .records()
        .map(|r| r.unwrap()[z_col].parse().unwrap())
        .collect();
    assert!(heights.iter().all(|z| *z == heights[0]));
}
