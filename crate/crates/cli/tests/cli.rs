use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/config/pipeline.json")
}

fn privlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privlens")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_prints_the_resolved_config() {
    let out = privlens(&["validate", "-c", path(&config())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(resolved["input"].as_str().unwrap().ends_with("synthetic_1k.jsonl"));
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"input": "nowhere.jsonl"}"#).unwrap();
    let out = privlens(&["validate", "-c", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let out = privlens(&["run", "-c", path(&config()), "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scoring_alone_recomputes_missing_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    let out = privlens(&["privacy", "score", "-c", path(&config()), "--output", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("risk_vs_posts.csv").is_file());
    assert!(dir.path().join("metadata.privacy-score.json").is_file());
}

#[test]
fn corrupt_corpus_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let raw = std::fs::read_to_string(config()).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&raw).unwrap();
    let corpus = dir.path().join("corrupt.jsonl");
    std::fs::write(&corpus, "{\"user_id\": \"u1\", \"text\": \n").unwrap();
    json["input"] = path(&corpus).into();
    json["output"] = path(&dir.path().join("out")).into();
    for key in ["windows", "case_series", "stopwords", "lemmas", "lexicon", "hashtag_labels", "topic_labels"] {
        let resolved = config().parent().unwrap().join(json[key].as_str().unwrap());
        json[key] = path(&resolved).into();
    }
    for key in ["names", "locations", "organisations"] {
        let resolved = config().parent().unwrap().join(json["gazetteers"][key].as_str().unwrap());
        json["gazetteers"][key] = path(&resolved).into();
    }
    for key in ["category_map", "report_cache"] {
        let resolved = config().parent().unwrap().join(json["urls"][key].as_str().unwrap());
        json["urls"][key] = path(&resolved).into();
    }
    let cfg = dir.path().join("pipeline.json");
    std::fs::write(&cfg, json.to_string()).unwrap();
    assert_eq!(privlens(&["validate", "-c", path(&cfg)]).status.code(), Some(0));
    let out = privlens(&["ingest", "-c", path(&cfg)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_tables_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = privlens(&["run", "-c", path(&config()), "--output", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("metadata.json").is_file());
    assert!(dir.path().join("risk_vs_posts.csv").is_file());

    let report = privlens(&["report", "-c", path(&config()), "--output", path(dir.path())]);
    assert_eq!(report.status.code(), Some(0), "{}", String::from_utf8_lossy(&report.stderr));
    assert!(String::from_utf8_lossy(&report.stdout).contains("risk_vs_posts"));
}

#[test]
fn json_format_writes_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = privlens(&["periods", "-c", path(&config()), "--output", path(dir.path()), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let written: Vec<PathBuf> = String::from_utf8_lossy(&out.stdout).lines().map(PathBuf::from).collect();
    let tables: Vec<&PathBuf> = written.iter().filter(|p| p.extension().is_some_and(|e| e == "json")).collect();
    assert!(tables.len() >= 2, "{written:?}");
    for table in tables {
        let _: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(table).unwrap()).unwrap();
    }
}
