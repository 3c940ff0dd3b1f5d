use std::path::Path;

use nl2sql_core::synthetic::{self, SuiteConfig};
use nl2sql_service::config::{BackendConfig, ServiceConfig};
use nl2sql_service::formats::{load_workload, parse_id_list, save_workload, AmbiqtRecord, CalibrationArtifact, FormatError};
use nl2sql_service::service::AppState;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn suite_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let s = synthetic::suite(&SuiteConfig { items: 6, ..Default::default() });
    save_workload(&dir.path().join("workload.jsonl"), &s.workload).unwrap();
    std::fs::write(dir.path().join("oracle.json"), serde_json::to_string(&s.oracle).unwrap()).unwrap();
    dir
}

#[test]
fn workload_round_trip() {
    let dir = suite_dir();
    let w = load_workload(&dir.path().join("workload.jsonl")).unwrap();
    let s = synthetic::suite(&SuiteConfig { items: 6, ..Default::default() });
    assert_eq!(w.items.len(), 6);
    assert_eq!(w.items[0].gold_sql, s.workload.items[0].gold_sql);
    assert_eq!(w.databases.len(), 1);
}

#[test]
fn workload_errors() {
    let dir = suite_dir();
    let item = |gold: &str, fixture: &str| {
        format!("{{\"id\": \"x\", \"question\": \"q\", \"db_id\": \"campus\", \"gold_sql\": \"{gold}\", \"fixture\": \"{fixture}\"}}")
    };
    let p = write(dir.path(), "a.jsonl", &format!("{}\nnot json\n", item("SELECT origin FROM students", "campus.json")));
    assert!(matches!(load_workload(&p), Err(FormatError::Parse { line: 2, .. })));
    let p = write(dir.path(), "b.jsonl", &item("SELEC origin", "campus.json"));
    assert!(matches!(load_workload(&p), Err(FormatError::Invalid { item, .. }) if item == "x"));
    let p = write(dir.path(), "c.jsonl", &item("SELECT nope FROM students", "campus.json"));
    assert!(matches!(load_workload(&p), Err(FormatError::Invalid { item, .. }) if item == "x"));
    let p = write(dir.path(), "d.jsonl", &item("SELECT origin FROM students", "missing.json"));
    assert!(matches!(load_workload(&p), Err(FormatError::MissingFixture { .. })));
}

#[test]
fn id_lists() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(parse_id_list("a, b,,c").unwrap(), ["a", "b", "c"]);
    let p = write(dir.path(), "ids", "x\n\ny\n");
    assert_eq!(parse_id_list(&format!("@{}", p.display())).unwrap(), ["x", "y"]);
}

#[test]
fn calibration_artifact_checks_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let good = r#"{"alpha": 0.1, "scoring": "llm", "n": 9, "scores": [0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9], "threshold": 0.9, "created_at": 0, "backend_id": "m"}"#;
    let a = CalibrationArtifact::load(&write(dir.path(), "g.json", good)).unwrap();
    assert_eq!(a.model().threshold, Some(0.9));
    assert_eq!(a.model_at(0.5).unwrap().threshold, Some(0.5));
    assert_eq!(a.model_at(0.05).unwrap().threshold, None);
    let tampered = good.replace("\"threshold\": 0.9", "\"threshold\": 0.2");
    assert!(CalibrationArtifact::load(&write(dir.path(), "t.json", &tampered)).is_err());
}

#[test]
fn service_config_resolves_paths() {
    let dir = suite_dir();
    let p = write(
        dir.path(),
        "service.toml",
        r#"
port = 9000
databases = ["campus.json"]
hint_journal = "state/hints.jsonl"
session_journal = "state/sessions.jsonl"

[pipeline]
max_calls = 4

[alpha_profiles]
strict = 0.05

[backend]
kind = "mock"
oracle = "oracle.json"
seed = 3
"#,
    );
    let cfg = ServiceConfig::load(&p).unwrap();
    assert_eq!(cfg.port, 9000);
    assert_eq!(cfg.pipeline.max_calls, 4);
    assert_eq!(cfg.pipeline.alpha, 0.1);
    assert!(matches!(&cfg.backend, BackendConfig::Mock { oracle, seed: 3, .. } if oracle == &dir.path().join("oracle.json")));
    let state = AppState::from_config(&cfg).unwrap();
    assert_eq!(state.databases.len(), 1);

    let bad = write(dir.path(), "bad.toml", "[backend]\nkind = \"carrier-pigeon\"\n");
    assert!(ServiceConfig::load(&bad).is_err());
    let zero = write(dir.path(), "zero.toml", "[pipeline]\nmax_calls = 0\n[backend]\nkind = \"mock\"\noracle = \"o.json\"\n");
    assert!(ServiceConfig::load(&zero).is_err());
}

#[test]
fn ambiqt_mapping() {
    let r: AmbiqtRecord = serde_json::from_str(
        r#"{"db_id": "concert", "question": "How many singers do we have?", "query1": "SELECT COUNT(*) FROM artists", "query2": "SELECT COUNT(*) FROM performers"}"#,
    )
    .unwrap();
    let item = r.into_item("q1".into());
    assert_eq!(item.fixture, "concert.json");
    assert_eq!(item.alternatives(), ["SELECT COUNT(*) FROM artists", "SELECT COUNT(*) FROM performers"]);
}
