use std::process::{Command, Output};

use serde_json::Value;

fn labelbudget(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelbudget"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn dist_example() {
    let v = json(&labelbudget(&[
        "dist", "--p", "0.8", "--eps", "0.01", "--q", "0.8",
    ]));
    let d = &v["result"]["dist"];
    for (key, want) in [("x", 0.16), ("y", 0.154), ("z", 0.686)] {
        assert!((d[key].as_f64().unwrap() - want).abs() < 1e-15, "{key}");
    }
}

#[test]
fn compare_prefers_single_labels() {
    let v = json(&labelbudget(&[
        "compare", "--p", "0.8", "--eps", "0.01", "--q", "0.8", "--budget", "1500", "--m", "3",
    ]));
    let r = &v["result"]["reports"][0];
    assert_eq!(r["winner"], "single");
    assert!(r["p_success_single"].as_f64() > r["p_success_agg"].as_f64());
}

#[test]
fn capacity_example() {
    let v = json(&labelbudget(&[
        "capacity", "--p", "0.75", "--eps", "0.1", "--q", "0.75", "--n", "1500", "--delta", "0.05",
    ]));
    let r = &v["result"];
    assert!(r["models_cramer"].as_u64().unwrap() >= 17);
    assert_eq!(r["max_comparisons_hoeffding"], 0);
}

#[test]
fn correlated_flags() {
    let v = json(&labelbudget(&[
        "exact", "--pw", "0.7", "--pb0", "0.8", "--pb1", "0.9", "--qb", "0.8", "--qw", "0.7",
        "--n", "20",
    ]));
    assert_eq!(v["input"]["mode"], "correlated");
    let p = v["result"]["p_success"].as_f64().unwrap();
    assert!(p > 0.5 && p < 1.0);
}

#[test]
fn csv_output() {
    let out = labelbudget(&[
        "compare", "--p", "0.8", "--eps", "0.01", "--q", "0.8", "--budget", "150", "--m", "3",
        "--m", "5", "--format", "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("plan_agg.m") && lines[0].contains("winner"));

    let out = labelbudget(&["figdata", "fig2a", "--budget", "150", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("q,"), "{text}");
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn exit_codes() {
    let bad_value = labelbudget(&["dist", "--p", "0.8", "--eps", "0.5", "--q", "0.8"]);
    assert_eq!(bad_value.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_value.stderr).contains("epsilon"));

    let small_budget = labelbudget(&[
        "exact", "--p", "0.8", "--eps", "0.01", "--q", "0.8", "--budget", "2", "--m", "3",
    ]);
    assert_eq!(small_budget.status.code(), Some(2));

    let unknown = labelbudget(&["dist", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(64));
    assert!(!unknown.stderr.is_empty());

    assert_eq!(labelbudget(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(labelbudget(&["--help"]).status.code(), Some(0));
}

#[test]
fn sweep_runs_and_caps() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("s.csv");
    let out = labelbudget(&[
        "sweep",
        "--resolution",
        "0.25",
        "--n",
        "1",
        "--n",
        "2",
        "--m",
        "3",
        "--output",
        out_path.to_str().unwrap(),
    ]);
    let v = json(&out);
    assert_eq!(v["result"]["violations_a1"], 0);
    assert!(out_path.exists());
    assert!(dir.path().join("s.summary.json").exists());

    let capped = labelbudget(&[
        "sweep",
        "--resolution",
        "0.01",
        "--max-points",
        "1000",
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(capped.status.code(), Some(3));
}

#[test]
fn request_file_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("req.json");
    std::fs::write(
        &path,
        r#"{"mode":"independent","params":{"p":0.8,"epsilon":0.01,"q":0.8},"plan":{"k":300,"m":3}}"#,
    )
    .unwrap();
    let from_file = labelbudget(&["bounds", "--request", path.to_str().unwrap()]);
    let from_flags = labelbudget(&[
        "bounds", "--p", "0.8", "--eps", "0.01", "--q", "0.8", "--budget", "300", "--m", "3",
    ]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, from_flags.stdout);
}
