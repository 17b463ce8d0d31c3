use std::path::Path;
use std::process::{Command, Output};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

fn ipg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipg"))
        .args(args)
        .env_remove("IPG_ENDPOINT")
        .env_remove("IPG_API_KEY")
        .env_remove("IPG_MODEL")
        .output()
        .unwrap()
}

fn generate_into(dir: &Path) -> Output {
    ipg(&[
        "generate",
        "--seeds",
        &format!("{FIXTURES}/seeds.jsonl"),
        "--mock-fixture",
        &format!("{FIXTURES}/mock_backend.json"),
        "--n",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ])
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_writes_records_rejections_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate_into(dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["records.jsonl", "rejected.jsonl", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["variations"], 3);
    assert_eq!(manifest["seed_file_sha256"].as_str().unwrap().len(), 64);

    let records = dir.path().join("records.jsonl");
    let v = ipg(&["verify", "--data", records.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0), "{}", stdout(&v));
    assert!(stdout(&v).contains("0 divergent"));
}

#[test]
fn remote_backend_without_endpoint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ipg(&[
        "generate",
        "--seeds",
        &format!("{FIXTURES}/seeds.jsonl"),
        "--backend",
        "remote",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("IPG_ENDPOINT"));
}

#[test]
fn unreachable_endpoint_is_a_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ipg"))
        .args([
            "generate",
            "--seeds",
            &format!("{FIXTURES}/seeds.jsonl"),
            "--backend",
            "remote",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .env("IPG_ENDPOINT", "http://127.0.0.1:9/v1/chat/completions")
        .env("IPG_MODEL", "test")
        .env_remove("IPG_API_KEY")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tampered_answer_is_divergent() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(format!("{FIXTURES}/worked_examples.jsonl")).unwrap();
    let tampered = text.replacen("\"execution_result\": \"0.5\"", "\"execution_result\": \"0.6\"", 1);
    assert_ne!(text, tampered);
    let path = dir.path().join("tampered.jsonl");
    std::fs::write(&path, tampered).unwrap();
    let out = ipg(&["verify", "--data", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(6));
    assert!(stdout(&out).contains("1 divergent"));
}

#[test]
fn python_source_is_unverifiable_not_divergent() {
    let out = ipg(&["verify", "--data", &format!("{FIXTURES}/dart_python_source.jsonl")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("unverifiable: opaque source"));
}

#[test]
fn audit_writes_tables_and_checks_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let data = format!("{FIXTURES}/taxonomy_faults.jsonl");
    let out = ipg(&["audit", "--data", &data, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "metrics.json",
        "formula_counts.csv",
        "chapters.csv",
        "unknowns.csv",
        "taxonomy.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let taxonomy = std::fs::read_to_string(dir.path().join("taxonomy.csv")).unwrap();
    assert!(taxonomy.contains("duplicate-text-a,13"));

    let checked = ipg(&[
        "audit",
        "--data",
        &data,
        "--seed-counts",
        &format!("{DATA}/cmv1_seed_counts.json"),
        "--check",
        &format!("{DATA}/cmv1_expectations.json"),
    ]);
    assert_eq!(checked.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&checked.stderr).contains("miss: /metrics/total"));
}

#[test]
fn empty_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "").unwrap();
    assert_eq!(ipg(&["audit", "--data", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn import_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(format!("{FIXTURES}/worked_examples.jsonl")).unwrap();
    let values: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let input = dir.path().join("corpus.json");
    std::fs::write(&input, serde_json::to_string_pretty(&values).unwrap()).unwrap();
    let output = dir.path().join("corpus.jsonl");
    let out = ipg(&[
        "import",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("imported 2 records"));

    let s = ipg(&["stats", "--data", output.to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(0));
    assert!(stdout(&s).contains("records: 2"));
}

#[test]
fn bad_flags_exit_with_config_status() {
    assert_eq!(ipg(&["generate", "--bogus"]).status.code(), Some(2));
    assert_eq!(ipg(&["--help"]).status.code(), Some(0));
}
