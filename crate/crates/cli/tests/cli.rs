use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn percolate(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_percolate"))
        .args(args)
        .current_dir(dir)
        .env_remove("PERCOLATE_BUDGET_VERTICES")
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(stdout.lines().count(), 1, "one summary line: {stdout}");
    serde_json::from_str(&stdout).unwrap()
}

#[test]
fn generate_grid_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = percolate(
        &["generate", "--model", "lrp", "--d", "1", "--L", "16", "--alpha", "1.5", "--lambda", "0", "--seed", "7", "--out", "g.txt"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("g.txt")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("e ")).count(), 15);
    let s = summary(&out);
    assert_eq!(s["result"]["edges"], 15);
    assert_eq!(s["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(s["config"]["L"], 16);
}

#[test]
fn bk_two_edges() {
    let dir = tempfile::tempdir().unwrap();
    let out = percolate(&["bk", "--n", "2", "--p", "0.5,0.5", "--eventA", "open:1", "--eventB", "open:2"], dir.path());
    assert!(out.status.success());
    let s = summary(&out);
    assert_eq!(s["result"]["p_disjoint"], 0.25);
    assert_eq!(s["result"]["p_product"], 0.25);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = percolate(
            &[
                "generate", "--model", "sfp", "--d", "2", "--L", "12", "--alpha", "1.3", "--tau", "2.6", "--lambda", "0.7",
                "--seed", "99", "--costs", "true", "--threads", threads, "--out", name,
            ],
            dir.path(),
        );
        assert!(out.status.success());
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("a.txt", "1");
    assert_eq!(a, run("b.txt", "1"));
    assert_eq!(a, run("c.txt", "2"));

    let tail = |name: &str, threads: &str| {
        let out = percolate(
            &[
                "tail", "--model", "lrp", "--L", "200", "--alpha", "1.4", "--lambda", "0.2", "--pairs", "50:60,80:150",
                "--k", "1,2,3,5", "--trials", "40", "--seed", "5", "--threads", threads, "--out", name,
            ],
            dir.path(),
        );
        assert!(out.status.success());
        (std::fs::read(dir.path().join(name)).unwrap(), out.stdout)
    };
    let (csv1, s1) = tail("t1.csv", "1");
    let (csv2, s2) = tail("t2.csv", "3");
    assert_eq!(csv1, csv2);
    let strip = |s: &[u8]| {
        let mut v: Value = serde_json::from_slice(s).unwrap();
        v["config"].as_object_mut().unwrap().retain(|k, _| k != "threads" && k != "out");
        v
    };
    assert_eq!(strip(&s1), strip(&s2));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = percolate(
        &["growth", "--model", "lrp", "--L", "101", "--alpha", "1.5", "--lambda", "0.3", "--k", "0,1,2,3", "--trials", "20", "--seed", "8"],
        dir.path(),
    );
    assert!(first.status.success());
    let s = summary(&first);
    std::fs::write(dir.path().join("cfg.json"), s["config"].to_string()).unwrap();
    let second = percolate(&["growth", "--config", "cfg.json"], dir.path());
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);

    let overridden = percolate(&["growth", "--config", "cfg.json", "--seed", "9"], dir.path());
    assert_eq!(summary(&overridden)["config"]["seed"], 9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing_seed = percolate(&["generate", "--model", "lrp", "--L", "16", "--alpha", "1.5"], dir.path());
    assert_eq!(missing_seed.status.code(), Some(1));
    let unknown = percolate(&["frobnicate"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));
    let budget = Command::new(env!("CARGO_BIN_EXE_percolate"))
        .args(["generate", "--model", "lrp", "--L", "64", "--alpha", "1.5", "--seed", "1"])
        .env("PERCOLATE_BUDGET_VERTICES", "10")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(budget.status.code(), Some(2));
    let cffp_budget = percolate(&["generate", "--model", "cffp", "--d", "2", "--L", "70", "--alpha", "1.5", "--tau", "4", "--seed", "1"], dir.path());
    assert_eq!(cffp_budget.status.code(), Some(2));
    let help = percolate(&["--help"], dir.path());
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn distance_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let gen = percolate(
        &["generate", "--model", "lrp", "--L", "12", "--alpha", "1.5", "--lambda", "0", "--seed", "1", "--out", "g.txt"],
        dir.path(),
    );
    assert!(gen.status.success());
    let out = percolate(&["distance", "--graph", "g.txt", "--x", "2", "--y", "9"], dir.path());
    assert_eq!(summary(&out)["result"]["hops"], 7);
    let bad = percolate(&["distance", "--graph", "g.txt", "--x", "2", "--y", "99"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn coupling_reports_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = percolate(
        &[
            "coupling", "--kind", "alpha", "--model", "sfp", "--L", "64", "--alpha", "1.8", "--tau", "4", "--lambda", "0.3",
            "--alpha-prime", "1.5", "--trials", "10", "--seed", "2", "--out", "r.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&out)["result"]["violations"], 0);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["details"].as_array().unwrap().len(), 10);
}
