//! End-to-end checks of the `lresnet` binary: exit codes, artifact schemas,
//! and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_lresnet")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lresnet_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn bounds_report_and_eps_zero_equivalence() {
    let dir = tmp_dir("bounds");
    let cfg = write_config(
        &dir,
        "b.json",
        r#"{"h":0.1,"m":1.0,"big_m":1.0,"d":10,"k":50,"w2_init":2.0,"eps":0.0}"#,
    );
    let out1 = dir.join("o1");
    let st = run(&["bounds", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert!(st.status.success());
    let report1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out1.join("bound.json")).unwrap()).unwrap();

    // eps > 0 via --set, then eps = 0 explicitly: totals differ / agree.
    let out2 = dir.join("o2");
    let st = run(&[
        "bounds",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "eps=0.5",
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let report2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("bound.json")).unwrap()).unwrap();
    let total1 = report1["report"]["total"].as_f64().unwrap();
    let total2 = report2["report"]["total"].as_f64().unwrap();
    let approx2 = report2["report"]["approximation"].as_f64().unwrap();
    assert!(approx2 > 0.0);
    assert!((total2 - approx2 - total1).abs() < 1e-12);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bounds_sweep_emits_one_row_per_k() {
    let dir = tmp_dir("sweep");
    let cfg = write_config(
        &dir,
        "b.json",
        r#"{"h":0.1,"m":1.0,"big_m":1.0,"d":4,"w2_init":1.0,"sweep":{"key":"k","from":1,"to":100}}"#,
    );
    let out = dir.join("o");
    let st = run(&["bounds", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(st.status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101); // header + 100 rows
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bounds_boundary_regime_is_flagged() {
    let dir = tmp_dir("boundary");
    // h = 2/(m+M) exactly representable: m = M = 1 gives h = 1.
    let cfg = write_config(
        &dir,
        "b.json",
        r#"{"h":1.0,"m":1.0,"big_m":1.0,"d":2,"k":5,"w2_init":1.0,"sweep":{"key":"h","values":[0.5,1.0,1.5]}}"#,
    );
    let out = dir.join("o");
    let st = run(&["bounds", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows[0].contains(",first,"));
    assert!(rows[1].contains(",boundary,"));
    assert!(rows[2].contains(",second,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bounds_invalid_h_exits_2_naming_precondition() {
    let dir = tmp_dir("badh");
    let cfg = write_config(&dir, "b.json", r#"{"h":3.0,"m":1.0,"big_m":1.0}"#);
    let out = dir.join("o");
    let st = run(&["bounds", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(2));
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("2/M"), "stderr: {err}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn construct_identity_report() {
    let dir = tmp_dir("construct");
    let cfg = write_config(&dir, "c.json", r#"{"kind":"identity","d":3}"#);
    let out = dir.join("o");
    let st = run(&["construct", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(st.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["formula_params"], 12);
    assert_eq!(report["measured_params"], 12);
    assert_eq!(report["formula_matches"], true);
    assert_eq!(report["max_err"].as_f64().unwrap(), 0.0);
    // The network file is loadable JSON in the documented schema.
    let net: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("network.json")).unwrap()).unwrap();
    assert!(net["layers"][0]["A"].is_array());
    assert!(net["layers"][0]["b"].is_array());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn construct_mult_meets_grid_tolerance() {
    let dir = tmp_dir("mult");
    let cfg = write_config(&dir, "c.json", r#"{"kind":"mult","m":2.0,"eps":0.01}"#);
    let out = dir.join("o");
    let st = run(&["construct", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(st.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["details"]["grid_max_err"].as_f64().unwrap() <= 0.01);
    assert_eq!(report["details"]["zero_axis_max"].as_f64().unwrap(), 0.0);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn construct_indicator_probe_values() {
    let dir = tmp_dir("indicator");
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"kind":"indicator","d":2,"r":1.0,"delta":0.2}"#,
    );
    let out = dir.join("o");
    let st = run(&["construct", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(st.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let probes = report["details"]["probe_radii_values"].as_array().unwrap();
    assert_eq!(probes[0].as_f64().unwrap(), 1.0);
    assert!((probes[1].as_f64().unwrap() - 0.5).abs() <= 1e-12);
    assert!(probes[2].as_f64().unwrap().abs() <= 1e-12);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sample_minimal_config_writes_all_states_and_is_byte_identical() {
    let dir = tmp_dir("sample");
    let cfg = write_config(
        &dir,
        "s.json",
        r#"{
            "target": {"kind": "gaussian", "mean": [0.0], "cov": [[1.0]]},
            "chain": {"step_size": 0.1, "steps": 7, "particles": 5, "seed": 42}
        }"#,
    );
    let out1 = dir.join("o1");
    let st = run(&["sample", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv1 = std::fs::read(out1.join("trajectory.csv")).unwrap();
    let text = String::from_utf8(csv1.clone()).unwrap();
    // Header + (K+1) blocks of `particles` rows.
    assert_eq!(text.lines().count(), 1 + 8 * 5);
    assert!(text.starts_with("step,particle,coord0\n"));
    let s = summary(&out1);
    assert_eq!(s["states_written"], 8);
    assert_eq!(s["rows_written"], 40);
    assert!(s["config_hash"].as_str().unwrap().len() == 64);

    let out2 = dir.join("o2");
    let st = run(&["sample", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert!(st.status.success());
    let csv2 = std::fs::read(out2.join("trajectory.csv")).unwrap();
    assert_eq!(csv1, csv2, "same seed must give byte-identical CSV");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sample_gzip_writes_compressed_trajectory() {
    let dir = tmp_dir("gzip");
    let cfg = write_config(
        &dir,
        "s.json",
        r#"{
            "target": {"kind": "gaussian", "mean": [0.0], "cov": [[1.0]]},
            "chain": {"step_size": 0.1, "steps": 3, "particles": 4, "seed": 1},
            "gzip": true
        }"#,
    );
    let out = dir.join("o");
    let st = run(&["sample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(st.status.success());
    let bytes = std::fs::read(out.join("trajectory.csv.gz")).unwrap();
    assert_eq!(&bytes[..2], &[0x1f, 0x8b], "gzip magic");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sample_config_parse_error_exits_2() {
    let dir = tmp_dir("badcfg");
    let cfg = write_config(&dir, "s.json", "{ not json");
    let out = dir.join("o");
    let st = run(&["sample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sample_step_size_violation_exits_2() {
    let dir = tmp_dir("badh2");
    let cfg = write_config(
        &dir,
        "s.json",
        r#"{
            "target": {"kind": "gaussian", "mean": [0.0], "cov": [[0.25]]},
            "chain": {"step_size": 0.6, "steps": 3, "particles": 2, "seed": 1}
        }"#,
    );
    let out = dir.join("o");
    // Precision 4 => M = 4 => h must stay below 0.5.
    let st = run(&["sample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("2/M"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sample_numeric_abort_exits_3_with_step_in_stderr() {
    let dir = tmp_dir("abort");
    // A stack whose single block multiplies by 1e13: first step explodes.
    let stack_dir = dir.join("stack");
    std::fs::create_dir_all(&stack_dir).unwrap();
    std::fs::write(
        stack_dir.join("step_0001.json"),
        r#"{"layers":[{"A":[[1e13]],"b":[0.0]},{"A":[[1e13]],"b":[0.0]}]}"#,
    )
    .unwrap();
    std::fs::write(
        stack_dir.join("manifest.json"),
        r#"{"schema_version":1,"spec":{},"seed":1,"step_size":1.0,"files":["step_0001.json"]}"#,
    )
    .unwrap();
    let cfg = write_config(
        &dir,
        "s.json",
        &format!(
            r#"{{
                "target": {{"kind": "gaussian", "mean": [0.0], "cov": [[1.0]]}},
                "reference": {{"kind": "point_mass", "point": [1.0]}},
                "chain": {{"step_size": 1.0, "steps": 1, "particles": 1, "seed": 1}},
                "drift": {{"kind": "stack", "dir": {:?}}}
            }}"#,
            stack_dir.to_str().unwrap()
        ),
    );
    let out = dir.join("o");
    let st = run(&["sample", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&st.stderr);
    let diag: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(diag["error"], "numeric_abort");
    assert_eq!(diag["step"], 1);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn train_then_sample_through_stack() {
    let dir = tmp_dir("trainsample");
    let cfg = write_config(
        &dir,
        "t.json",
        r#"{
            "target": {"kind": "gaussian", "mean": [0.5], "cov": [[1.0]]},
            "train": {"epochs": 2, "dataset_size": 64, "steps": 4, "horizon": 0.4, "width": 8},
            "seed": 3
        }"#,
    );
    let out = dir.join("o");
    let st = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(out.join("stack/manifest.json").exists());
    assert!(out.join("stack/loss_curves.csv").exists());

    let sample_cfg = write_config(
        &dir,
        "s.json",
        &format!(
            r#"{{
                "target": {{"kind": "gaussian", "mean": [0.5], "cov": [[1.0]]}},
                "chain": {{"step_size": 0.1, "steps": 4, "particles": 8, "seed": 9}},
                "drift": {{"kind": "stack", "dir": {:?}}}
            }}"#,
            out.join("stack").to_str().unwrap()
        ),
    );
    let out2 = dir.join("o2");
    let st = run(&["sample", "--config", sample_cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn experiment_smoke_writes_curves() {
    let dir = tmp_dir("experiment");
    let cfg = write_config(
        &dir,
        "e.json",
        r#"{
            "target": {"kind": "gaussian", "mean": [1.0, -1.0], "cov": [[1.0, 0.0], [0.0, 1.0]]},
            "train": {"epochs": 2, "dataset_size": 96, "steps": 6, "horizon": 0.6, "width": 8,
                      "learning_rate": 5e-3, "warm_start": true},
            "sinkhorn": {"lambda": 0.01, "tol": 1e-4, "max_iters": 1000},
            "repetitions": 1,
            "n_eval": 64,
            "eval_every": 3,
            "seed": 11
        }"#,
    );
    let out = dir.join("o");
    let st = run(&["experiment", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for f in ["curve_model.csv", "curve_baseline.csv", "runs_raw.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let model = std::fs::read_to_string(out.join("curve_model.csv")).unwrap();
    assert!(model.starts_with("t,s_lambda_mean,s_lambda_std,n_runs\n"));
    assert_eq!(model.lines().count(), 1 + 3); // t = 0, 0.3, 0.6
    std::fs::remove_dir_all(&dir).ok();
}
