//! End-to-end checks of the command-line binary: ingestion of both input
//! formats, count export, and error-path exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_futurelm")
}

fn run_in(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(bin())
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn ingest_jsonl_and_bibtex_into_one_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let jsonl = dir.path().join("docs.jsonl");
    std::fs::write(
        &jsonl,
        concat!(
            r#"{"year": 2001, "text": "neural parsing of sentences"}"#,
            "\n",
            r#"{"year": 2002, "text": "statistical parsing with features"}"#,
            "\n",
        ),
    )
    .unwrap();
    let bib = dir.path().join("refs.bib");
    std::fs::write(
        &bib,
        "@article{k1,\n  title = {Attention for translation},\n  abstract = {We translate with attention models},\n  year = {2003}\n}\n",
    )
    .unwrap();

    let out = run_in(
        dir.path(),
        &[
            "ingest",
            "--input",
            jsonl.to_str().unwrap(),
            bib.to_str().unwrap(),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let ds: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("dataset.json")).unwrap())
            .unwrap();
    assert_eq!(ds["format_version"], 1);
    assert_eq!(ds["stats"]["documents"], 3);
    let years: Vec<i64> = ds["corpus"]["years"]
        .as_array()
        .unwrap()
        .iter()
        .map(|y| y.as_i64().unwrap())
        .collect();
    assert_eq!(years, vec![2001, 2002, 2003]);
    assert!(dir.path().join("resolved_config.json").exists());
}

#[test]
fn freq_csv_exports_per_year_counts() {
    let dir = tempfile::tempdir().unwrap();
    let jsonl = dir.path().join("docs.jsonl");
    std::fs::write(
        &jsonl,
        concat!(
            r#"{"year": 1, "text": "apple apple pear"}"#,
            "\n",
            r#"{"year": 2, "text": "apple pear pear pear"}"#,
            "\n",
        ),
    )
    .unwrap();
    assert!(run_in(dir.path(), &["ingest", "--input", jsonl.to_str().unwrap()])
        .status
        .success());
    let out = run_in(
        dir.path(),
        &[
            "freq-csv",
            "--dataset",
            dir.path().join("dataset.json").to_str().unwrap(),
            "--words",
            "apple,pear",
        ],
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("frequencies.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "year,word,count,relative_frequency");
    assert!(csv.contains("1,apple,2,"));
    assert!(csv.contains("2,pear,3,0.75"));
}

#[test]
fn missing_dataset_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["train", "--dataset", "/nonexistent/dataset.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_config_exits_with_failure_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let out = Command::new(bin())
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .arg("synth")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unsupported_input_extension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("notes.txt");
    std::fs::write(&bad, "plain text").unwrap();
    let out = run_in(dir.path(), &["ingest", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported"));
}
