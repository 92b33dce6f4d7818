use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cabaret_core::runner::{model_prediction, run_greedy, EXAMPLE_SCENARIO};
use serde_json::Value;

fn cabaret(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cabaret")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_scenario(dir: &Path) -> &'static str {
    let text = EXAMPLE_SCENARIO
        .replace("items = 1000", "items = 200")
        .replace("n = 20", "n = 5")
        .replace("width = 50", "width = 5")
        .replace("sessions = 10000", "sessions = 300")
        .replace("capacities = [10, 20, 30, 40, 50]", "capacities = [5, 15]");
    fs::write(dir.join("s.toml"), text).unwrap();
    "s.toml"
}

#[test]
fn run_writes_a_reproducible_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scenario(dir.path());
    let a = cabaret(&["run", cfg, "--out", "a"], dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(stdout(&a).contains("cabaret      W=5    D=2    C=50"), "{}", stdout(&a));
    for f in ["cells.csv", "chr_steps.csv", "exploration.csv", "traces.jsonl", "config.toml", "summary.json"] {
        assert!(dir.path().join("a").join(f).is_file(), "{f}");
    }
    assert!(cabaret(&["run", cfg, "-o", "b"], dir.path()).status.success());
    assert!(cabaret(&["run", cfg, "-o", "c", "--seed", "9"], dir.path()).status.success());
    let read = |d: &str| fs::read(dir.path().join(d).join("traces.jsonl")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn sweep_and_compare_caching_cover_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_scenario(dir.path());
    let out = cabaret(&["sweep", cfg, "-o", "sw"], dir.path());
    assert!(out.status.success());
    let rows = stdout(&out).lines().filter(|l| l.contains("chr=")).count();
    assert_eq!(rows, 4, "two kinds at two capacities");
    let cells = fs::read_to_string(dir.path().join("sw/cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 5);

    let out = cabaret(&["compare-caching", cfg, "-o", "cc"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("C=5 ") && text.contains("C=15 "), "{text}");
    assert!(dir.path().join("cc/compare_caching.csv").is_file());
}

#[test]
fn fixtures_feed_greedy() {
    let dir = tempfile::tempdir().unwrap();
    let out = cabaret(&["export-fixtures", "fx"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 4);
    let out = cabaret(&["greedy", "fx/instance.json", "--capacity", "6"], dir.path());
    assert!(out.status.success());
    let got: Value = serde_json::from_slice(&out.stdout).unwrap();
    let want = serde_json::to_value(run_greedy(dir.path().join("fx/instance.json"), 6).unwrap()).unwrap();
    assert_eq!(got, want);
    assert_eq!(got["items"].as_array().unwrap().len(), 6);
    assert!(got["objective"].as_f64().unwrap() >= got["top_popular_objective"].as_f64().unwrap());
}

#[test]
fn model_prints_the_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let out = cabaret(&["model", "--L", "40", "--qc", "0.1", "--alpha", "0.8", "--n", "10"], dir.path());
    assert!(out.status.success());
    let got: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(got, serde_json::to_value(model_prediction(40, 0.1, 0.8, 10).unwrap()).unwrap());
    assert_eq!(got["mean_cached"], 4.0);
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cabaret(&["run", "missing.toml"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("bad.toml"), "seed = 1\n").unwrap();
    assert_eq!(cabaret(&["sweep", "bad.toml"], dir.path()).status.code(), Some(2));
    assert_eq!(cabaret(&["model", "--L", "10", "--qc", "1.5"], dir.path()).status.code(), Some(2));
    assert_eq!(cabaret(&["greedy", "missing.json", "--capacity", "3"], dir.path()).status.code(), Some(3));
    assert_eq!(cabaret(&["frobnicate"], dir.path()).status.code(), Some(2));

    let graph = dir.path().join("g.jsonl");
    fs::write(&graph, "not a graph\n").unwrap();
    let text = EXAMPLE_SCENARIO.replace("synthetic = { items = 1000, zipf_alpha = 1.0, avg_degree = 10, seed = 1 }", "path = \"g.jsonl\"");
    fs::write(dir.path().join("broken.toml"), text).unwrap();
    let out = cabaret(&["run", "broken.toml"], dir.path());
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
