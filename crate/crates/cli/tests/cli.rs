use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lomn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lomn"))
        .args(args)
        .env("LOMN_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn simulate(dir: &Path, seed: &str, extra: &[&str]) -> String {
    let path = dir.join(format!("quotes_{seed}.csv"));
    let p = path.to_str().unwrap().to_string();
    let mut args = vec!["simulate", "--n", "6000", "--seed", seed, "--q", "0.0001", "-o", &p];
    args.extend_from_slice(extra);
    let out = lomn(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

fn json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

#[test]
fn simulated_jump_is_found_and_located() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.json");
    let file = simulate(
        dir.path(),
        "11",
        &["--jump", "0.004", "--jump-time", "0.4", "--truth", truth.to_str().unwrap()],
    );
    let t: Value = serde_json::from_str(&fs::read_to_string(&truth).unwrap()).unwrap();
    assert_eq!(t["jumps"][0]["time"], 0.4);

    let report = json(&lomn(&["test-global", "-i", &file, "--side", "ask"]));
    assert_eq!(report["reject"], true);
    assert!((report["theta_hat"].as_f64().unwrap() - 0.4).abs() < 0.02);
    assert!(report.get("standardized").is_none());

    let bid = json(&lomn(&["test-global", "-i", &file, "--side", "bid", "--nhn", "10"]));
    assert_eq!(bid["reject"], true);

    let local = json(&lomn(&["test-local", "-i", &file, "--tau", "0.4", "--nhn", "12"]));
    assert_eq!(local["reject"], true);
    assert!(local["jump_estimate"].as_f64().unwrap() > 0.002);
}

#[test]
fn no_jump_session_is_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let file = simulate(dir.path(), "5", &[]);
    let report = json(&lomn(&["test-global", "-i", &file, "--alpha", "0.01"]));
    assert_eq!(report["reject"], false);
    let seq = json(&lomn(&["test-global", "-i", &file, "--alpha", "0.01", "--sequential"]));
    assert_eq!(seq["events"].as_array().unwrap().len(), 0);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = fs::read(simulate(a.path(), "3", &[])).unwrap();
    let fb = fs::read(simulate(b.path(), "3", &[])).unwrap();
    assert_eq!(fa, fb);
    let fc = fs::read(simulate(b.path(), "4", &[])).unwrap();
    assert_ne!(fa, fc);
}

#[test]
fn online_events_are_json_lines_with_documented_fields() {
    let dir = tempfile::tempdir().unwrap();
    let file = simulate(dir.path(), "8", &["--jump", "-0.005", "--jump-time", "0.6"]);
    let out = lomn(&["detect-online", "-i", &file, "--alpha", "0.01"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let events: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!events.is_empty());
    for e in &events {
        for key in ["session_time", "wall_clock", "direction", "size_estimate", "interval_lo", "interval_hi", "alpha"] {
            assert!(e.get(key).is_some(), "missing {key} in {e}");
        }
    }
    let hit = events
        .iter()
        .find(|e| (e["session_time"].as_f64().unwrap() - 0.6).abs() < 0.02)
        .expect("event near the jump");
    assert_eq!(hit["direction"], "down");
}

#[test]
fn clean_splits_into_seven_segments() {
    let dir = tempfile::tempdir().unwrap();
    let file = simulate(dir.path(), "2", &[]);
    let out_dir = dir.path().join("clean");
    let summary = json(&lomn(&[
        "clean",
        "-i",
        &file,
        "--side",
        "ask",
        "--split",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]));
    let segs = summary[0]["segments"].as_array().unwrap();
    assert_eq!(segs.len(), 7);
    assert_eq!(segs[0]["label"], "09:35-10:00");
    let total: u64 = segs.iter().map(|s| s["observations"].as_u64().unwrap()).sum();
    assert_eq!(total, summary[0]["observations"].as_u64().unwrap());
    let text = fs::read_to_string(out_dir.join("ask.csv")).unwrap();
    assert!(text.starts_with("time,wall_clock_sec,value\n"));
    assert!(out_dir.join("ask_1500-1600.csv").exists());
}

#[test]
fn acf_and_calibration_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let f1 = simulate(dir.path(), "21", &[]);
    let f2 = simulate(dir.path(), "22", &[]);
    let out = lomn(&["diagnose-acf", &f1, &f2, "--side", "mid", "--max-lag", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("lag,median_acf"));

    let cal = json(&lomn(&[
        "calibrate-bootstrap",
        "--statistic",
        "lm",
        "--n",
        "3000",
        "--nhn",
        "10",
        "--reps",
        "200",
        "--seed",
        "1",
    ]));
    assert_eq!(cal["samples"], 200);
    assert!(cal["critical_value"].as_f64().unwrap() > 0.0);
}

#[test]
fn infrastructure_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let out = lomn(&["test-global", "-i", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "time_sec,ask_price,bid_price\n34200,50.01,49.99\n34201,oops,49.98\n").unwrap();
    let out = lomn(&["test-global", "-i", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "time_sec,ask_price,bid_price\n").unwrap();
    assert_eq!(lomn(&["clean", "-i", empty.to_str().unwrap(), "--out-dir", "x"]).status.code(), Some(2));

    let out = lomn(&["reproduce-table", "--table", "t4", "--reps", "50"]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(lomn(&["test-global", "--bogus"]).status.code(), Some(2));
}
