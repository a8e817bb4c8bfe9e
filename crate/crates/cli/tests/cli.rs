use std::path::PathBuf;
use std::process::{Command, Output};

use seqchart_core::chart::Statechart;
use seqchart_core::sim::{ReachabilityReport, SessionStatus, SessionTrace, StatsSummary};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn seqchart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqchart"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn validate_minimal_is_silent() {
    let o = seqchart(&["validate", &fixture("minimal.json")]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    assert!(o.stderr.is_empty());
}

#[test]
fn validate_names_the_childless_cluster() {
    let o = seqchart(&["validate", &fixture("childless.json")]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("T1"), "{err}");
    assert!(err.contains("childless-cluster"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&seqchart(&[])), 2);
    assert_eq!(code(&seqchart(&["frobnicate"])), 2);
    assert_eq!(code(&seqchart(&["simulate", &fixture("quiz.json")])), 2);
    assert_eq!(
        code(&seqchart(&["simulate", &fixture("quiz.json"), "--policy", "sometimes"])),
        2
    );
    assert_eq!(code(&seqchart(&["validate", "/no/such/manifest.json"])), 2);
    assert_eq!(code(&seqchart(&["--help"])), 0);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for out in [&a, &b] {
        let o = seqchart(&[
            "simulate",
            &fixture("quiz.json"),
            "--policy",
            "always-pass",
            "--seed",
            "7",
            "-o",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let trace = SessionTrace::from_jsonl(std::str::from_utf8(&text).unwrap()).unwrap();
    assert_eq!(trace.status(), SessionStatus::Completed);
}

#[test]
fn compile_writes_chart_and_map() {
    let dir = tempfile::tempdir().unwrap();
    let chart = dir.path().join("chart.json");
    let map = dir.path().join("map.json");
    let o = seqchart(&[
        "compile",
        &fixture("quiz.json"),
        "-o",
        chart.to_str().unwrap(),
        "--map",
        map.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let c = Statechart::from_json(&std::fs::read_to_string(&chart).unwrap()).unwrap();
    assert!(c.contains("Q1#exit") || c.contains("I1#exit"));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&map).unwrap()).unwrap();
    assert_eq!(m["entry_of"]["I1"], "I1#entry");
}

#[test]
fn strategies_change_the_compiled_chart() {
    let plain = seqchart(&["compile", &fixture("quiz.json")]);
    let capped = seqchart(&["compile", &fixture("quiz.json"), "--strategy", &fixture("cap2.json")]);
    assert_eq!(code(&capped), 0);
    assert_ne!(plain.stdout, capped.stdout);
    assert!(String::from_utf8_lossy(&capped.stdout).contains("I1#attempt-limit"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"[{"name": "mastery-threshold", "params": {"threshold": 1.5}}]"#).unwrap();
    let o = seqchart(&["compile", &fixture("quiz.json"), "--strategy", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn explore_reports_reachability() {
    let o = seqchart(&["explore", &fixture("quiz.json")]);
    assert_eq!(code(&o), 0);
    let r: ReachabilityReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r.completion_reachable);

    let o = seqchart(&["explore", &fixture("quiz.json"), "--outcomes", "failed"]);
    let r: ReachabilityReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!r.completion_reachable);
    assert!(r.livelock_witness.is_some());

    let o = seqchart(&["explore", &fixture("quiz.json"), "--max-nodes", "2"]);
    assert_eq!(code(&o), 1);
    let r: ReachabilityReport = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r.partial);
}

#[test]
fn stats_summarize_a_population() {
    let o = seqchart(&[
        "stats",
        &fixture("quiz.json"),
        "--policy",
        "bernoulli:0.5",
        "--learners",
        "40",
        "--strategy",
        &fixture("cap2.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s: StatsSummary = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s.learners, 40);
    assert_eq!(s.completion_rate, 1.0);
}
