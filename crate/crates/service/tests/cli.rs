use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nl2sql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nl2sql")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = nl2sql(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, items: usize) -> String {
    let d = dir.to_str().unwrap();
    ok(&["fixtures", "synth", "--out", d, "--items", &items.to_string(), "--noise", "0.15"]);
    dir.join("workload.jsonl").to_str().unwrap().to_string()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bench_three_items() {
    let dir = tempfile::tempdir().unwrap();
    let w = synth(dir.path(), 3);
    let report = dir.path().join("report.json");
    let out = ok(&["bench", "--workload", &w, "--k", "4", "--report", report.to_str().unwrap()]);
    assert!(out.contains("AvgAcc"));
    let r = read(&report);
    assert_eq!(r["items"].as_array().unwrap().len(), 3);
    assert!(r["avg_acc"].is_number() && r["avg_result_size"].is_number());
    assert!(r.get("calibration_id").is_none());
}

#[test]
fn calibrate_then_bench_with_selector() {
    let dir = tempfile::tempdir().unwrap();
    let w = synth(dir.path(), 30);
    let art = dir.path().join("calib.json");
    let split: Vec<String> = (0..15).map(|i| format!("s{i}")).collect();
    let out = ok(&["calibrate", "--workload", &w, "--split", &split.join(","), "--alpha", "0.1", "--out", art.to_str().unwrap()]);
    let a = read(&art);
    assert_eq!(a["n"].as_u64().unwrap() as usize, a["scores"].as_array().unwrap().len());
    for key in ["alpha", "scoring", "threshold", "created_at", "backend_id"] {
        assert!(a.get(key).is_some(), "{key}");
    }
    let id = out.split_whitespace().nth(1).unwrap().trim_end_matches(':').to_string();

    let ids = dir.path().join("test_ids.txt");
    std::fs::write(&ids, (15..30).map(|i| format!("s{i}\n")).collect::<String>()).unwrap();
    let report = dir.path().join("report.json");
    let audit = dir.path().join("audit.jsonl");
    ok(&[
        "bench",
        "--workload",
        &w,
        "--items",
        &format!("@{}", ids.display()),
        "--calibration",
        art.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--audit",
        audit.to_str().unwrap(),
    ]);
    let r = read(&report);
    assert_eq!(r["calibration_id"], id.as_str());
    assert_eq!(r["config"]["selector_enabled"], true);
    assert_eq!(std::fs::read_to_string(&audit).unwrap().lines().count(), 15);
}

#[test]
fn usage_and_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let w = synth(dir.path(), 3);
    let out = nl2sql(&["bench", "--workload", &w, "--k", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"question\": \"q\", \"db_id\": \"campus\", \"gold_sql\": \"SELEC x\", \"fixture\": \"campus.json\"}\n").unwrap();
    let out = nl2sql(&["fixtures", "validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line1"));

    let out = nl2sql(&["bench", "--workload", &w, "--calibration", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn personalized_bench_writes_hint_journal() {
    let dir = tempfile::tempdir().unwrap();
    let w = synth(dir.path(), 12);
    let journal = dir.path().join("hints.jsonl");
    let j = journal.to_str().unwrap();
    ok(&["bench", "--workload", &w, "--k", "4", "--personalize", "--simulated-user", "--hint-journal", j]);
    let lines = std::fs::read_to_string(&journal).unwrap();
    assert!(lines.lines().count() > 0);
    assert!(lines.lines().all(|l| l.contains("\"op\":\"upsert\"")));
}
