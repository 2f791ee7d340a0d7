#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use narrative_arc::corpus::{load_corpus, AnnotationRecord, Label};

pub const BIN: &str = env!("CARGO_BIN_EXE_narrative-arc");

pub fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env_remove("NARRATIVE_ARC_CACHE")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

pub fn cli_ok(dir: &Path, args: &[&str]) -> Output {
    let out = cli(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Three annotators per narrative copying the planted labels; the third
/// drops the climax on every fifth story.
pub fn simulated_annotations(truth: &Path, store: &Path) {
    let corpus = load_corpus(truth).unwrap();
    let mut lines = String::new();
    for (k, e) in corpus.entries().iter().enumerate() {
        let labels = e.labels.as_ref().unwrap();
        for annotator in ["ann-a", "ann-b", "ann-c"] {
            let mut climax: Vec<usize> = labels.indices_of(Label::Climax).into_iter().collect();
            if annotator == "ann-c" && k % 5 == 0 {
                climax.clear();
            }
            let r = AnnotationRecord::new(
                e.narrative.id.clone(),
                annotator,
                climax,
                labels.indices_of(Label::Resolution),
            );
            lines.push_str(&serde_json::to_string(&r).unwrap());
            lines.push('\n');
        }
    }
    std::fs::write(store, lines).unwrap();
}

/// synth → ingest → annotate → agreement → split → train → predict → evaluate,
/// all inside `dir`. Returns the final evaluation report.
pub fn run_pipeline(dir: &Path, seed: &str) -> Vec<u8> {
    let small = ["--d", "24", "--heads", "2", "--layers", "1", "--max-epochs", "15", "--patience", "5"];
    cli_ok(dir, &["synth", "--out", "truth.jsonl", "--narratives", "40", "--dump", "posts.jsonl", "--seed", seed]);
    cli_ok(dir, &["ingest", "--source", "posts.jsonl", "--subreddit", "synthetic", "--out", "ingested.jsonl"]);
    simulated_annotations(&dir.join("truth.jsonl"), &dir.join("store.jsonl"));
    cli_ok(
        dir,
        &[
            "agreement", "--corpus", "ingested.jsonl", "--store", "store.jsonl", "--out", "agreement.json",
            "--gold-out", "gold.jsonl",
        ],
    );
    cli_ok(dir, &["split", "--corpus", "gold.jsonl", "--out-dir", "split", "--seed", seed]);
    let mut train = vec![
        "train", "--train", "split/train.jsonl", "--val", "split/validation.jsonl", "--out", "model.json",
        "--history-out", "history.json", "--seed", seed,
    ];
    train.extend(small);
    cli_ok(dir, &train);
    cli_ok(dir, &["predict", "--model", "model.json", "--corpus", "split/test.jsonl", "--out", "pred.jsonl"]);
    cli_ok(
        dir,
        &["evaluate", "--pred", "pred.jsonl", "--gold", "split/test.jsonl", "--system", "msense", "--out", "report.json"],
    );
    std::fs::read(dir.join("report.json")).unwrap()
}
