use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn mrsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrsense"))
        .args(args)
        .output()
        .expect("spawn mrsense")
}

fn ok(args: &[&str]) -> Value {
    let out = mrsense(args);
    assert!(
        out.status.success(),
        "mrsense {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON summary on stdout")
}

fn error_code(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("JSON error on stderr");
    v["error"]["code"].as_str().unwrap().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_spec(dir: &Path) -> std::path::PathBuf {
    let spec = json!({
        "rows": 8, "cols": 10, "n_days": 128,
        "origin_lat": 45.0, "origin_lon": -105.0, "cell_size_deg": 1.0,
        "background": { "west": 8.0, "east": 6.0 },
        "seasonal": { "amplitude": 1.0, "period_days": 64.0 },
        "events": [{ "center": [3, 4], "sigma": 1.5, "t_start": 32, "duration": 16, "peak": 3.0 }],
        "noise_sigma": 0.05,
        "seed": 1
    });
    let path = dir.join("spec.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    path
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = small_spec(d);
    let (data, tree) = (d.join("data"), d.join("tree"));
    let synth = ok(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    assert_eq!(synth["cells"], 80);
    assert!(data.join("truth.json").exists() && data.join("run_config.json").exists());

    let single = ok(&["dmd", "--in", p(&data), "--out", p(&d.join("dmd")), "--rank", "4"]);
    assert_eq!(single["rank"], 4);

    ok(&["mrdmd", "--in", p(&data), "--out", p(&tree), "--levels", "6"]);
    let rc: Value = serde_json::from_str(&std::fs::read_to_string(tree.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(rc["subcommand"], "mrdmd");
    assert_eq!(rc["levels"], 6);
    assert_eq!(rc["tol"], 1e-2);

    let sensors = d.join("sensors.csv");
    let placed = ok(&["place", "--library", p(&tree), "--out", p(&sensors), "--include", "significant"]);
    let count = placed["sensors"].as_u64().unwrap();
    assert_eq!(count, placed["library_columns"].as_u64().unwrap());
    let csv = std::fs::read_to_string(&sensors).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "rank,cell_index,row,col,lat,lon,score");
    assert_eq!(csv.lines().count() as u64, count + 1);

    let report = d.join("report.json");
    let rec = ok(&[
        "reconstruct", "--library", p(&tree), "--sensors", p(&sensors), "--include", "significant", "--in",
        p(&data), "--out", p(&report), "--baseline", "random:k=5,seed=2",
    ]);
    let err = rec["relative_frobenius"].as_f64().unwrap();
    assert!(err < rec["baseline_median"].as_f64().unwrap());

    let tf = d.join("tf.csv");
    let summary = ok(&[
        "report", "--tree", p(&tree), "--time-frequency-map", p(&tf), "--sensors", p(&sensors), "--in", p(&data),
    ]);
    assert_eq!(summary["sensors"]["count"].as_u64(), Some(count));
    assert!(summary["windows"][0]["data_mean"].as_f64().unwrap() > 6.0);
    let tf = std::fs::read_to_string(&tf).unwrap();
    assert_eq!(tf.lines().next().unwrap(), "level,bin,t_start,t_end,n_significant");
    assert!(tf.lines().nth(1).unwrap().starts_with("0,0,2000-01-01,"));
}

#[test]
fn refuses_more_sensors_than_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = small_spec(d);
    let (data, tree) = (d.join("data"), d.join("tree"));
    ok(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    ok(&["mrdmd", "--in", p(&data), "--out", p(&tree), "--levels", "4"]);
    let out = mrsense(&["place", "--library", p(&tree), "--out", p(&d.join("s.csv")), "--count", "81"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "too_many_sensors");
    assert!(!d.join("s.csv").exists());
}

#[test]
fn constant_field_flags_only_the_background() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = json!({
        "rows": 4, "cols": 5, "n_days": 64,
        "background": { "west": 3.0, "east": 3.0 },
        "seasonal": { "amplitude": 0.0, "period_days": 365.0 },
        "noise_sigma": 0.0, "seed": 0
    });
    std::fs::write(d.join("spec.json"), spec.to_string()).unwrap();
    let (data, tree, tf) = (d.join("data"), d.join("tree"), d.join("tf.csv"));
    ok(&["synth", "--spec", p(&d.join("spec.json")), "--out", p(&data)]);
    ok(&["mrdmd", "--in", p(&data), "--out", p(&tree)]);
    ok(&["report", "--tree", p(&tree), "--time-frequency-map", p(&tf)]);
    let rows: Vec<String> = std::fs::read_to_string(&tf).unwrap().lines().skip(1).map(String::from).collect();
    let flagged: Vec<&String> = rows.iter().filter(|r| !r.ends_with(",0")).collect();
    assert_eq!(flagged.len(), 1, "{rows:?}");
    assert!(flagged[0].starts_with("0,0,"));
}

#[test]
fn config_file_overrides_and_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = small_spec(d);
    let data = d.join("data");
    std::fs::write(d.join("cfg.json"), json!({ "subcommand": "synth", "seed": 9 }).to_string()).unwrap();
    let out = ok(&["synth", "--spec", p(&spec), "--out", p(&data), "--config", p(&d.join("cfg.json"))]);
    assert_eq!(out["seed"], 9);

    std::fs::write(d.join("cfg.json"), json!({ "levels": 3, "rank": 2 }).to_string()).unwrap();
    ok(&["mrdmd", "--in", p(&data), "--out", p(&d.join("tree")), "--config", p(&d.join("cfg.json"))]);
    let rc: Value = serde_json::from_str(&std::fs::read_to_string(d.join("tree/run_config.json")).unwrap()).unwrap();
    assert_eq!((rc["levels"].as_u64(), rc["rank"].as_u64()), (Some(3), Some(2)));

    std::fs::write(d.join("bad.json"), json!({ "level": 3 }).to_string()).unwrap();
    let out = mrsense(&["mrdmd", "--in", p(&data), "--out", p(&d.join("t2")), "--config", p(&d.join("bad.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "invalid_config");

    std::fs::write(d.join("wrong.json"), json!({ "subcommand": "place" }).to_string()).unwrap();
    let out = mrsense(&["mrdmd", "--in", p(&data), "--out", p(&d.join("t3")), "--config", p(&d.join("wrong.json"))]);
    assert_eq!(error_code(&out), "invalid_config");
}

#[test]
fn run_config_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = small_spec(d);
    let data = d.join("data");
    ok(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    ok(&["mrdmd", "--in", p(&data), "--out", p(&d.join("a")), "--levels", "4", "--rank", "3", "--seed", "2"]);
    let a = std::fs::read_to_string(d.join("a/run_config.json")).unwrap();
    // Same settings, new output directory.
    let mut cfg: Value = serde_json::from_str(&a).unwrap();
    cfg["out"] = json!(p(&d.join("b")));
    std::fs::write(d.join("replay.json"), cfg.to_string()).unwrap();
    ok(&["mrdmd", "--in", "ignored", "--out", "ignored", "--config", p(&d.join("replay.json"))]);
    let b: Value = serde_json::from_str(&std::fs::read_to_string(d.join("b/run_config.json")).unwrap()).unwrap();
    assert_eq!(b, cfg);
    assert_eq!(
        std::fs::read(d.join("a/library.bin")).unwrap(),
        std::fs::read(d.join("b/library.bin")).unwrap()
    );
}

#[test]
fn missing_input_is_reported_as_json() {
    let out = mrsense(&["mrdmd", "--in", "/nonexistent/series", "--out", "/tmp/never"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!error_code(&out).is_empty());
}
