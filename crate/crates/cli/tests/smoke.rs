//! Runs the binary end to end on the bundled toy corpus with small dimensions.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reviewsense"))
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy_corpus.jsonl")
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn full_pipeline_on_toy_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = corpus();
    let corpus = corpus.to_str().unwrap();

    let hist = run(&["histogram", "--reviews", corpus]);
    let hist = String::from_utf8(hist.stdout).unwrap();
    let total: usize = hist.lines().map(|l| l.split('\t').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 300);

    run(&["preprocess", "--in", corpus, "--out", &p(d, "tokens.jsonl")]);
    run(&["train-pv", "--in", &p(d, "tokens.jsonl"), "--out", &p(d, "pv.model"), "--dim", "24", "--epochs", "5"]);
    run(&["build-sequences", "--reviews", corpus, "--pv-model", &p(d, "pv.model"), "--out", &p(d, "seq.jsonl")]);
    run(&["train-gru", "--sequences", &p(d, "seq.jsonl"), "--out", &p(d, "gru.model"), "--hidden", "8", "--epochs", "2"]);
    run(&["export-embeddings", "--model", &p(d, "gru.model"), "--sequences", &p(d, "seq.jsonl"), "--out", &p(d, "products.emb")]);
    let emb = std::fs::read_to_string(d.join("products.emb")).unwrap();
    assert!(emb.starts_with("PRODEMB v1 dim=8 count=10"), "{}", emb.lines().next().unwrap_or(""));

    run(&[
        "build-features", "--reviews", corpus, "--pv-model", &p(d, "pv.model"), "--emb-store", &p(d, "products.emb"),
        "--features-out", &p(d, "features.bin"), "--labels-out", &p(d, "labels.bin"),
    ]);
    run(&["train-svm", "--features", &p(d, "features.bin"), "--labels", &p(d, "labels.bin"), "--out", &p(d, "svm.model")]);
    run(&[
        "evaluate", "--features", &p(d, "features.bin"), "--labels", &p(d, "labels.bin"), "--k", "3", "--out",
        &p(d, "report.tsv"),
    ]);
    let report = std::fs::read_to_string(d.join("report.tsv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 5, "{report}");
    assert!(lines[4].starts_with("Average"));

    let inferred = run(&["infer-pv", "--model", &p(d, "pv.model"), "--text", "great product, I'll keep it"]);
    let v: Vec<f64> = serde_json::from_slice(&inferred.stdout).unwrap();
    assert_eq!(v.len(), 24);
}

#[test]
fn gradcheck_passes() {
    let out = run(&["gradcheck", "--instances", "3", "--steps", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "model\tinstances\tpartials\tmax_rel_error");
    for row in &rows[1..] {
        let err: f64 = row.rsplit('\t').next().unwrap().parse().unwrap();
        assert!(err <= 1e-5, "{row}");
    }
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let out = bin().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["histogram", "--reviews", "/nonexistent/reviews.jsonl"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
