//! Subcommands end to end through `kgqa_cli::run`.

use std::path::{Path, PathBuf};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["kgqa"];
    full.extend_from_slice(args);
    let code = kgqa_cli::run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn ingest_reports_counts_and_a_stable_digest() {
    let dir = tempfile::tempdir().unwrap();
    let tsv = dir.path().join("kb.tsv");
    std::fs::write(&tsv, "a\tr\tb\nb\tr\tc\na\tr\tb\n").unwrap();
    let snap = dir.path().join("kb.snap");
    let (code, out, err) = run(&["ingest", "--graph", &s(&tsv), "--out", &s(&snap)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(field(&out, "triples"), Some("2"));
    assert_eq!(field(&out, "entities"), Some("3"));
    assert_eq!(field(&out, "duplicates"), Some("1"));
    let (code, again, _) = run(&["ingest", "--graph", &s(&tsv), "--out", &s(&dir.path().join("b.snap"))]);
    assert_eq!(code, 0);
    assert_eq!(field(&out, "digest"), field(&again, "digest"));
    assert_eq!(std::fs::read(&snap).unwrap(), std::fs::read(dir.path().join("b.snap")).unwrap());
}

#[test]
fn missing_graph_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["ingest", "--graph", "/nonexistent/kb.tsv", "--out", &s(&dir.path().join("x"))]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["ask"]).0, 1);
    assert_eq!(run(&["--set", "colour=blue", "ask", "q", "--topic", "x"]).0, 1);
    assert_eq!(run(&["--set", "api_key=secret", "ask", "q", "--topic", "x"]).0, 1);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("ingest") && out.contains("eval"));
}

#[test]
fn index_is_deterministic_and_rejects_empty_corpora() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("shots.jsonl");
    std::fs::write(
        &corpus,
        concat!(
            r#"{"question": "who directed Kismet", "solution": "movie_to_director", "source_id": "t1"}"#,
            "\n",
            r#"{"question": "who wrote Milestones", "solution": "movie_to_writer", "source_id": "t2"}"#,
            "\n"
        ),
    )
    .unwrap();
    let a = dir.path().join("a.idx");
    let b = dir.path().join("b.idx");
    let (code, out, err) = run(&["--seed", "3", "index", "--corpus", &s(&corpus), "--out", &s(&a)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(field(&out, "documents"), Some("2"));
    assert_eq!(run(&["--seed", "3", "index", "--corpus", &s(&corpus), "--out", &s(&b)]).0, 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(run(&["index", "--corpus", &s(&empty), "--out", &s(&a)]).0, 2);
}

fn metaqa_args<'a>(kb: &'a str, script: &'a str) -> Vec<&'a str> {
    vec!["--set", kb, "--set", "graph_format=pipe", "--set", script]
}

#[test]
fn ask_answers_with_the_scripted_backend() {
    let fx = fixtures();
    let kb = format!("graph={}", s(&fx.join("metaqa_kb.txt")));
    let script = format!("script={}", s(&fx.join("metaqa_script.jsonl")));
    let mut args = metaqa_args(&kb, &script);
    args.extend(["ask", "who directed the films written by Edward Knoblock", "--topic", "Edward Knoblock"]);
    let (code, out, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines.contains(&"William Dieterle"), "{out}");
    assert_eq!(field(&out, "accepted"), Some("true"));
    assert_eq!(field(&out, "llm_calls"), Some("4"));
}

#[test]
fn ask_reports_no_answer() {
    let fx = fixtures();
    let kb = format!("graph={}", s(&fx.join("metaqa_kb.txt")));
    let script = format!("script={}", s(&fx.join("metaqa_script.jsonl")));
    let mut args = metaqa_args(&kb, &script);
    args.extend(["ask", "who wrote the films directed by George Marshall", "--topic", "George Marshall"]);
    let (code, out, _) = run(&args);
    assert_eq!(code, 0);
    assert!(out.starts_with("no answer\n"), "{out}");
    assert_eq!(field(&out, "accepted"), Some("false"));
    assert!(field(&out, "failure").is_some());
}

#[test]
fn ask_without_topic_is_usage() {
    let fx = fixtures();
    let kb = format!("graph={}", s(&fx.join("metaqa_kb.txt")));
    let script = format!("script={}", s(&fx.join("metaqa_script.jsonl")));
    let mut args = metaqa_args(&kb, &script);
    args.extend(["ask", "who directed Kismet"]);
    assert_eq!(run(&args).0, 1);
}

#[test]
fn eval_writes_the_report_files() {
    let fx = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let kb = format!("graph={}", s(&fx.join("metaqa_kb.txt")));
    let script = format!("script={}", s(&fx.join("metaqa_script.jsonl")));
    let mut args = metaqa_args(&kb, &script);
    let data = s(&fx.join("metaqa_qa.txt"));
    let out_dir = s(dir.path());
    args.extend(["eval", "--dataset", "metaqa3", "--data", &data, "--out", &out_dir]);
    let (code, out, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    for f in ["records.jsonl", "summary.txt", "metrics.tsv", "timings.tsv", "checkpoint.jsonl"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let records = std::fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 6);
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert_eq!(field(&summary, "instances"), Some("6"));
    assert!(!out.is_empty());
}

#[test]
fn eval_without_dataset_is_usage() {
    let fx = fixtures();
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&["eval", "--data", &s(&fx.join("metaqa_qa.txt")), "--out", &s(dir.path())]);
    assert_eq!(code, 1);
}
