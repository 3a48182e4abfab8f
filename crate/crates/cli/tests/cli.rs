use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use canonical_trends::corpus::load_corpus;

fn ctrend(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrend")).args(args).output().unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "toy");
    let o = ctrend(&[
        "synth", "--mode", "toy", "--seed", "42", "--T", "2000", "--gamma", "0.9", "--lag", "3", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let corpus = load_corpus(Path::new(&out)).unwrap();
    assert_eq!(corpus.n_bins(), 2000);
    assert_eq!(corpus.feed_ids().collect::<Vec<_>>(), vec!["X", "Y"]);
    let gen: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("toy/gen.json")).unwrap()).unwrap();
    assert_eq!(gen["seed"], 42);
    assert_eq!(gen["config"]["lag"], 3);

    let leader = path(dir.path(), "leader");
    let o = ctrend(&[
        "synth", "--mode", "leader", "--T", "300", "--feeds", "4", "--out", &leader,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let gen: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("leader/gen.json")).unwrap()).unwrap();
    assert!(gen["truth"]["leader"].is_string());
    assert_eq!(load_corpus(Path::new(&leader)).unwrap().feeds().len(), 4);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "toy");
    let o = Command::new(env!("CARGO_BIN_EXE_ctrend"))
        .args(["synth", "--T", "100", "--out", &out])
        .env("CT_SEED", "7")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let gen: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("toy/gen.json")).unwrap()).unwrap();
    assert_eq!(gen["seed"], 7);
}

#[test]
fn usage_errors_exit_two() {
    let o = ctrend(&["synth", "--mode", "toy"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--out"));

    let dir = tempfile::tempdir().unwrap();
    let o = ctrend(&["synth", "--gamma", "1.5", "--out", &path(dir.path(), "x")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("(0, 1]"), "{}", stderr(&o));

    let o = ctrend(&["analyze", "--corpus", "c", "--out", "c"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ctrend(&["analyze", "--corpus", "c", "--out", "d", "--kappas", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(ctrend(&["--help"]).status.code(), Some(0));
    assert_eq!(ctrend(&["frobnicate"]).status.code(), Some(2));
}

const FIXTURE: &str = r#"{"feed": "a", "timestamp": "2011-03-01T00:10:00Z", "text": "Volcano ash cloud"}
{"feed": "b", "timestamp": "2011-03-01T01:20:00Z", "text": "ash ash the volcano"}
{"feed": "a", "timestamp": "2011-03-01T02:05:00Z", "text": "cloud"}
"#;

#[test]
fn featurize_counts_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    fs::write(&docs, FIXTURE).unwrap();
    let out = path(dir.path(), "corpus");
    let o = ctrend(&[
        "featurize",
        "--docs",
        docs.to_str().unwrap(),
        "--out",
        &out,
        "--no-stem",
        "--normalization",
        "counts",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ingested 3 documents, dropped 0"));
    let c = load_corpus(Path::new(&out)).unwrap();
    assert_eq!(c.vocabulary().terms(), &["ash", "cloud", "volcano"]);
    assert_eq!(c.n_bins(), 3);
    let a = &c.feed("a").unwrap().matrix;
    let b = &c.feed("b").unwrap().matrix;
    assert_eq!(a.nnz() + b.nnz(), 6);
    assert_eq!([a.get(0, 0), a.get(1, 0), a.get(2, 0), a.get(1, 2)], [1.0; 4]);
    assert_eq!([b.get(0, 1), b.get(2, 1)], [2.0, 1.0]);

    let tfidf = path(dir.path(), "tfidf");
    let o = ctrend(&[
        "featurize",
        "--docs",
        docs.to_str().unwrap(),
        "--out",
        &tfidf,
        "--t0",
        "2011-03-01T00:00:00Z",
        "--T",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ingested 2 documents, dropped 1"));
}

#[test]
fn featurize_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("bad.jsonl");
    let lines: Vec<&str> = FIXTURE.lines().collect();
    fs::write(&docs, format!("{}\n{{\"feed\": \"b\"\n{}\n", lines[0], lines[2])).unwrap();
    let o = ctrend(&[
        "featurize",
        "--docs",
        docs.to_str().unwrap(),
        "--out",
        &path(dir.path(), "c"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = ctrend(&[
        "featurize",
        "--docs",
        empty.to_str().unwrap(),
        "--out",
        &path(dir.path(), "e"),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = ctrend(&[
        "featurize",
        "--docs",
        docs.to_str().unwrap(),
        "--out",
        "x",
        "--timezone",
        "Mars/Base",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_toy_and_stored_model_commands() {
    let dir = tempfile::tempdir().unwrap();
    let toy = path(dir.path(), "toy");
    assert!(ctrend(&["synth", "--T", "800", "--out", &toy]).status.success());
    let res = path(dir.path(), "res");
    let o = ctrend(&[
        "analyze",
        "--corpus",
        &toy,
        "--out",
        &res,
        "--lags",
        "1..5",
        "--kappas",
        "1e-3..1e1",
        "--baseline-lsa",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/report.json")).unwrap()).unwrap();
    let ranking = report["ranking"].as_array().unwrap();
    assert_eq!(ranking.len(), 2);
    assert_eq!(ranking[0]["feed_id"], "X");
    assert_eq!(report["config"]["seed"], 42);
    assert!(ranking[0]["lsa"].is_number());

    let feed = dir.path().join("res/feeds/X");
    let hash = report["config"]["corpus_hash"].as_str().unwrap();
    for f in ["correlogram.csv", "trend.csv", "topwords.csv"] {
        let first = fs::read_to_string(feed.join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert!(
            first.starts_with("# ctrend ") && first.contains("seed=42") && first.contains(hash),
            "{f}: {first}"
        );
    }
    let model = feed.join("model.json");
    let model = model.to_str().unwrap();

    let cg = path(dir.path(), "cg.csv");
    let o = ctrend(&["correlogram", "--corpus", &toy, "--model", model, "--out", &cg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&fs::read_to_string(&cg).unwrap());
    let peak = rows
        .iter()
        .max_by(|a, b| a[1].parse::<f64>().unwrap().total_cmp(&b[1].parse::<f64>().unwrap()))
        .unwrap();
    assert_eq!(peak[0], "3");

    let tw = path(dir.path(), "tw.csv");
    let o = ctrend(&[
        "topwords", "--corpus", &toy, "--model", model, "--out", &tw, "--top", "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let weights: Vec<f64> = data_rows(&fs::read_to_string(&tw).unwrap())
        .iter()
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(weights.iter().fold(0.0f64, |m, w| m.max(w.abs())), 1.0);

    let other = path(dir.path(), "other");
    assert!(ctrend(&["synth", "--T", "800", "--seed", "5", "--out", &other])
        .status
        .success());
    let o = ctrend(&["topwords", "--corpus", &other, "--model", model, "--out", &tw]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("hash"), "{}", stderr(&o));
}

#[test]
fn analyze_reports_missing_feed() {
    let dir = tempfile::tempdir().unwrap();
    let toy = path(dir.path(), "toy");
    assert!(ctrend(&["synth", "--T", "300", "--out", &toy]).status.success());
    let o = ctrend(&[
        "analyze",
        "--corpus",
        &toy,
        "--out",
        &path(dir.path(), "r"),
        "--feeds",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope"), "{}", stderr(&o));
}
