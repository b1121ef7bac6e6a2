use std::path::PathBuf;
use std::process::{Command, Output};

fn vsn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_shipped_scenarios() {
    for name in ["fire.json", "mixed.json"] {
        let out = vsn(&["validate", "--scenario", &scenario(name)]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{ "name": "x" }"#).unwrap();
    let out = vsn(&["validate", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let missing = vsn(&[
        "run",
        "--scenario",
        "/nonexistent.json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn run_with_baseline_writes_both_modes_and_a_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = vsn(&[
        "run",
        "--scenario",
        &scenario("fire.json"),
        "--seed",
        "3",
        "--baseline",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    for f in [
        "metrics.csv",
        "events.jsonl",
        "contour.json",
        "report.json",
        "comparison.json",
        "baseline/metrics.csv",
    ] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let cmp: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp["time_base"], "simulated");
    assert!(cmp["overhead_vs_baseline_pct"]
        .as_f64()
        .unwrap()
        .is_finite());
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = vsn(&[
            "run",
            "--scenario",
            &scenario("mixed.json"),
            "--iterations",
            "2",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        csv.push((
            std::fs::read(out_dir.join("metrics.csv")).unwrap(),
            std::fs::read(out_dir.join("events.jsonl")).unwrap(),
        ));
    }
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn json_format_and_contour_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = vsn(&[
        "run",
        "--scenario",
        &scenario("fire.json"),
        "--format",
        "json",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out_dir.join("metrics.json").exists());
    let target = dir.path().join("contour.json");
    let out = vsn(&[
        "contour",
        "--in",
        out_dir.join("events.jsonl").to_str().unwrap(),
        "--out",
        target.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let recomputed = std::fs::read(&target).unwrap();
    let written = std::fs::read(out_dir.join("contour.json")).unwrap();
    assert_eq!(recomputed, written);
}
