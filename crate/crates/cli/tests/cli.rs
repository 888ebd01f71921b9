//! The `pclm` binary: flags, config files and exit statuses.

use std::path::Path;
use std::process::{Command, Output};

fn pclm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pclm")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn simulate(dir: &Path, layout: &str) -> String {
    let out_dir = dir.join("sim");
    let out = pclm(&["simulate", "--layout", layout, "--seed", "3", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    out_dir.to_str().unwrap().to_string()
}

fn data_flags(sim: &str) -> Vec<String> {
    vec![
        "--counts".into(),
        format!("{sim}/counts.csv"),
        "--exposures".into(),
        format!("{sim}/exposures.csv"),
        "--grouping".into(),
        format!("{sim}/grouping.txt"),
    ]
}

fn run(sub: &str, sim: &str, out_dir: &Path, extra: &[&str]) -> Output {
    let mut args: Vec<String> = vec![sub.into()];
    args.extend(data_flags(sim));
    args.extend(["--out-dir".into(), out_dir.to_str().unwrap().into()]);
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    pclm(&refs)
}

#[test]
fn fit_succeeds_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sweden");
    let out = run("fit", &sim, &dir.path().join("fit"), &["--basis", "19,12", "--lambda", "10,1000"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("fit/estimates.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit/report.json")).unwrap()).unwrap();
    assert_eq!(report["lambdas"], serde_json::json!([10.0, 1000.0]));
    assert_eq!(report["estimate_rows"], 5700);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sweden");
    let out_dir = dir.path().join("x");
    assert_eq!(code(&run("fit", &sim, &out_dir, &["--lambda", "1,2,3"])), 2);
    assert_eq!(code(&run("fit", &sim, &out_dir, &["--engine", "lapack"])), 2);
    assert_eq!(code(&run("fit", &sim, &out_dir, &["--level", "abc"])), 2);
    assert_eq!(code(&pclm(&["fit", "--counts", "/nonexistent.csv", "--grouping", "/nonexistent.txt"])), 2);
    assert_eq!(code(&pclm(&["fit", "--bogus"])), 2);
    let out = pclm(&["fit"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--grouping is required"));
}

#[test]
fn nonconvergence_exits_with_three_and_keeps_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sweden");
    let out = run("fit", &sim, &dir.path().join("fit"), &["--max-iter", "2"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(dir.path().join("fit/estimates.csv").exists());
}

#[test]
fn naive_engine_on_the_three_dimensional_layout_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "spain");
    let out = run(
        "fit",
        &sim,
        &dir.path().join("fit"),
        &["--engine", "naive", "--basis", "21,4,10", "--lambda", "30,0.1,100"],
    );
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("resource budget exceeded"));
}

#[test]
fn config_file_entries_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sweden");
    let cfg = dir.path().join("run.cfg");
    let mut text = format!("counts = {sim}/counts.csv\ngrouping = {sim}/grouping.txt\n");
    text.push_str(&format!("out_dir = {}\nlambda = 10,1000\nbasis = 19,12\n", dir.path().join("a").display()));
    std::fs::write(&cfg, text).unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&pclm(&["fit", "--config", cfg])), 0);
    let out_b = dir.path().join("b");
    assert_eq!(code(&pclm(&["fit", "--config", cfg, "--lambda", "5", "--out-dir", out_b.to_str().unwrap()])), 0);
    let read = |d: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(d).join("report.json")).unwrap()).unwrap()
    };
    assert_eq!(read("a")["lambdas"], serde_json::json!([10.0, 1000.0]));
    assert_eq!(read("b")["lambdas"], serde_json::json!([5.0, 5.0]));
    assert_eq!(read("b")["dimensions"][0]["basis"], 19);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        assert_eq!(code(&pclm(&["simulate", "--seed", "9", "--out-dir", out_dir.to_str().unwrap()])), 0);
    }
    for file in ["counts.csv", "fine_counts.csv", "exposures.csv", "truth.csv", "grouping.txt"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(file)).unwrap(), "{file}");
    }
}

#[test]
fn grid_search_benchmark_and_aggregate_run() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), "sweden");
    let out = run("grid-search", &sim, &dir.path().join("grid"), &["--basis", "19,12", "--grid", "10,1000"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let grid: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("grid/grid.json")).unwrap()).unwrap();
    assert_eq!(grid["points"].as_array().unwrap().len(), 4);

    let out = run("benchmark", &sim, &dir.path().join("bench"), &["--basis", "19,12", "--lambda", "10,1000"]);
    assert_eq!(code(&out), 0);
    let bench: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("bench/benchmark.json")).unwrap()).unwrap();
    assert_eq!(bench["engines"][1]["engine"], "naive");

    let agg = dir.path().join("agg");
    let out = pclm(&[
        "aggregate",
        "--counts",
        &format!("{sim}/fine_counts.csv"),
        "--grouping",
        &format!("{sim}/grouping.txt"),
        "--out-dir",
        agg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(agg.join("counts.csv")).unwrap(), std::fs::read(format!("{sim}/counts.csv")).unwrap());
}
