use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GOLDEN_FILES: [&str; 5] = ["minutes.csv", "detection.json", "estimate.json", "overlay.svg", "quantiles.csv"];

fn stocap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stocap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = stocap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn sample() -> String {
    repo().join("data/sample_events.csv").to_string_lossy().into_owned()
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for n in names {
        let (x, y) = (std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap());
        assert!(x == y, "{n} differs between {} and {}", a.display(), b.display());
    }
}

#[test]
fn step_by_step_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (minutes, detection, estimate) = (d.join("minutes.csv"), d.join("detection.json"), d.join("estimate.json"));
    ok(&["ingest", "--input", &sample(), "--out", s(&minutes)]);
    assert!(d.join("minutes.csv.manifest.json").exists());
    ok(&[
        "detect",
        "--minutes",
        s(&minutes),
        "--breakdown-speed",
        "40",
        "--discard-speed",
        "50",
        "--recovery-speed",
        "70",
        "--out",
        s(&detection),
    ]);
    let det = json(&detection);
    assert!(det["breakdowns"].as_array().unwrap().len() >= 20);
    assert!(det["breakdowns"][0]["flow_pce_3min"].as_u64().unwrap() > 0);
    assert!(det["histogram"][0].as_array().unwrap().len() == 2);

    ok(&["estimate", "--method", "cfb", "--detection", s(&detection), "--starts", "4", "--out", s(&estimate)]);
    let est = json(&estimate);
    assert_eq!(est["converged"], true);
    assert!(est["params"]["scale"].as_f64().unwrap() > 100.0);
    assert!(est["predicted_cfb"]["values"].as_array().unwrap().len() > 10);

    let plm = d.join("plm.json");
    ok(&["estimate", "--method", "plm", "--detection", s(&detection), "--imin", "50", "--imax", "180", "--out", s(&plm)]);
    let plm = json(&plm);
    assert!(plm["params"].is_null());
    assert_eq!(plm["bounds"]["min"], 50);
    assert!(plm["notice"].as_str().unwrap().contains("biased"));

    // The pipeline produces the same intermediate files.
    let p = d.join("pipeline");
    ok(&["pipeline", "--input", &sample(), "--out-dir", s(&p)]);
    same_files(d, &p, &["minutes.csv", "detection.json"]);
}

#[test]
fn synth_embeds_seed_and_generator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synth.json");
    ok(&[
        "synth", "--lambda", "150", "--gamma", "6.5", "--records", "6486", "--seed", "42", "--out", s(&out),
    ]);
    let v = json(&out);
    assert_eq!(v["seed"], 42);
    assert_eq!(v["prng"], "chacha8-rand_chacha0.9-seed_from_u64-u53");
    assert_eq!(v["config"]["records"], 6486);
    let counts: u64 = v["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(counts, v["realized_total"].as_u64().unwrap());
    let expected = v["expected_total"].as_f64().unwrap();
    assert!((expected - 51.4).abs() < 1.0, "{expected}");

    let manifest = dir.path().join("synth.json.manifest.json");
    assert_eq!(json(&manifest)["seeds"][0], 42);
    let again = dir.path().join("again");
    ok(&["rerun", s(&manifest), "--out-dir", s(&again)]);
    same_files(dir.path(), &again, &["synth.json"]);
}

#[test]
fn report_reproduces_quantile_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    ok(&["report", "--a", "149.73,6.55", "--b", "154.35,7.19", "--out-dir", s(&out), "--fixed-clock"]);
    let csv = std::fs::read_to_string(out.join("quantiles.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["probability_pct", "intensity_a", "intensity_b", "abs_diff", "rel_diff_pct"]);
    assert_eq!(rows.len(), 9);
    let a: f64 = rows[1][1].parse().unwrap();
    let b: f64 = rows[1][2].parse().unwrap();
    assert!((a - 52.1).abs() <= 0.1 && (b - 59.1).abs() <= 0.1);
    let mean: f64 = rows[8][3].parse().unwrap();
    assert!((mean - 7.0).abs() <= 0.1);
    assert!(out.join("relative_difference.csv").exists());
    let svg = std::fs::read_to_string(out.join("overlay.svg")).unwrap();
    assert!(svg.contains("no empirical curve"));

    let single = dir.path().join("single");
    ok(&["report", "--a", "149.73,6.55", "--out-dir", s(&single)]);
    let csv = std::fs::read_to_string(single.join("quantiles.csv")).unwrap();
    assert!(csv.starts_with("probability_pct,intensity\n"));
    assert!(!single.join("relative_difference.csv").exists());
    assert!(single.join("overlay.svg").exists());
}

#[test]
fn pipeline_matches_golden_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bundle");
    ok(&["pipeline", "--input", &sample(), "--out-dir", s(&out), "--fixed-clock"]);
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sample_pipeline");
    if std::env::var_os("STOCAP_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(&golden).unwrap();
        for n in GOLDEN_FILES {
            std::fs::copy(out.join(n), golden.join(n)).unwrap();
        }
    }
    same_files(&out, &golden, &GOLDEN_FILES);
    let entries = std::fs::read_dir(&out).unwrap().count();
    assert_eq!(entries, GOLDEN_FILES.len() + 1);
}

#[test]
fn pipeline_config_file_and_manifest_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("first");
    let body = serde_json::json!({
        "input": sample(),
        "out_dir": out,
        "method": "plm",
        "detection": {"recovery_speed": 75.0}
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    ok(&["pipeline", "--config", s(&cfg)]);
    let manifest = out.join("manifest.json");
    let m = json(&manifest);
    assert_eq!(m["subcommand"], "pipeline");
    assert_eq!(m["config"]["detection"]["recovery_speed"], 75.0);
    assert_eq!(m["config"]["detection"]["breakdown_speed"], 40.0);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["fixed_clock"], false);

    let second = dir.path().join("second");
    ok(&["pipeline", "--config", s(&manifest), "--out-dir", s(&second)]);
    same_files(&out, &second, &GOLDEN_FILES);
}

#[test]
fn missing_input_exits_two_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_events.csv");
    let out = stocap(&["pipeline", "--input", s(&missing), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no_such_events.csv"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(stocap(&["ingest", "--input", "x.csv"]).status.code(), Some(2));
    assert_eq!(stocap(&["estimate", "--imin", "5"]).status.code(), Some(2));
    assert_eq!(stocap(&["experiment", "table9"]).status.code(), Some(2));
    assert_eq!(stocap(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn computation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("det.json");
    let body = serde_json::json!({
        "breakdowns": [],
        "histogram": [[100, 5], [110, 3]],
        "discarded_minutes": 0,
        "congested_minutes": 0,
        "skipped_breakdowns": 0,
        "gap_windows": 0,
        "ended_congested": false
    });
    std::fs::write(&det, body.to_string()).unwrap();
    let out = stocap(&["estimate", "--detection", s(&det), "--out", s(&dir.path().join("e.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no breakdowns"));
}

#[test]
fn experiments_write_bundle_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("censoring.json");
    std::fs::write(&cfg, r#"{"censoring": {"targets": [0.5, 0.9, 0.99]}}"#).unwrap();
    let out = dir.path().join("cens");
    ok(&["experiment", "censoring", "--config", s(&cfg), "--out-dir", s(&out)]);
    let csv = std::fs::read_to_string(out.join("censoring.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(out.join("censoring.svg").exists());
    let again = dir.path().join("again");
    ok(&["rerun", s(&out.join("manifest.json")), "--out-dir", s(&again)]);
    same_files(&out, &again, &["censoring.csv", "censoring.json", "censoring.svg"]);

    let cfg = dir.path().join("compare.json");
    std::fs::write(&cfg, r#"{"seeds": [3, 4]}"#).unwrap();
    let out = dir.path().join("cmp");
    ok(&["experiment", "compare", "--config", s(&cfg), "--out-dir", s(&out), "--seed", "7"]);
    assert!(out.join("compare_seed_7.csv").exists() && out.join("compare_seed_8.csv").exists());
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["seeds"], serde_json::json!([7, 8]));
    assert_eq!(m["config"]["experiment"]["kind"], "compare");

    let cfg = dir.path().join("t3.json");
    std::fs::write(&cfg, r#"{"replicates": 3}"#).unwrap();
    let out = dir.path().join("t3");
    ok(&["experiment", "table3", "--config", s(&cfg), "--out-dir", s(&out)]);
    let csv = std::fs::read_to_string(out.join("table3.csv")).unwrap();
    assert!(csv.starts_with("variable,seed_1,seed_2,seed_3,mean,sd,max\n"), "{csv}");
}

#[test]
fn changed_input_blocks_replay() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("events.csv");
    std::fs::copy(repo().join("data/sample_events.csv"), &input).unwrap();
    let minutes = dir.path().join("m.csv");
    ok(&["ingest", "--input", s(&input), "--out", s(&minutes)]);
    std::fs::write(&input, "timestamp,speed_kmh,length_m,valid\n").unwrap();
    let out = stocap(&["rerun", s(&dir.path().join("m.csv.manifest.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}
