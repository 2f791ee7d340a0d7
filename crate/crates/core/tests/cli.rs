mod common;

use common::{cli, cli_ok, run_pipeline};
use narrative_arc::corpus::load_corpus;

#[test]
fn pipeline_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_pipeline(a.path(), "7");
    let second = run_pipeline(b.path(), "7");
    assert_eq!(String::from_utf8(first).unwrap(), String::from_utf8(second).unwrap());
    for file in ["gold.jsonl", "split/train.ids", "model.json", "pred.jsonl", "agreement.json"] {
        assert_eq!(
            std::fs::read(a.path().join(file)).unwrap(),
            std::fs::read(b.path().join(file)).unwrap(),
            "{file} differs"
        );
    }

    // ingest reproduces the segmentation the annotations refer to
    let truth = load_corpus(&a.path().join("truth.jsonl")).unwrap();
    let gold = load_corpus(&a.path().join("gold.jsonl")).unwrap();
    assert_eq!(truth.len(), gold.len());
    for (t, g) in truth.entries().iter().zip(gold.entries()) {
        assert_eq!(t.narrative.sentences, g.narrative.sentences);
    }
    let agreement: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("agreement.json")).unwrap()).unwrap();
    assert_eq!(agreement["complete_narratives"], 40);
    let kappa = agreement["report"]["kappa"].as_f64().unwrap();
    assert!(kappa > 0.8 && kappa < 1.0, "{kappa}");
}

#[test]
fn different_seeds_differ() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path(), "1");
    run_pipeline(b.path(), "2");
    assert_ne!(
        std::fs::read(a.path().join("split/train.ids")).unwrap(),
        std::fs::read(b.path().join("split/train.ids")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(cli(d, &[]).status.code(), Some(1));
    assert_eq!(cli(d, &["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(cli(d, &["split", "--corpus", "missing.jsonl"]).status.code(), Some(2));
    assert_eq!(cli(d, &["baseline", "--name", "oracle", "--corpus", "x.jsonl"]).status.code(), Some(1));
    std::fs::write(d.join("broken.jsonl"), "{not json\n").unwrap();
    let out = cli(d, &["stats", "--corpus", "broken.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.jsonl"));
    assert_eq!(cli(d, &["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cli_ok(d, &["synth", "--out", "c.jsonl", "--narratives", "20"]);
    std::fs::write(d.join("run.toml"), "ratios = \"0.5,0.25,0.25\"\nout_dir = \"from-config\"\n").unwrap();
    let out = cli_ok(d, &["--config", "run.toml", "split", "--corpus", "c.jsonl"]);
    let counts: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(counts["train"], 10);
    assert!(d.join("from-config/test.jsonl").exists());

    // flags on the command line win
    let out = cli_ok(d, &["--config", "run.toml", "split", "--corpus", "c.jsonl", "--ratios", "0.8,0.1,0.1"]);
    let counts: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(counts["train"], 16);

    std::fs::write(d.join("bad.toml"), "no_such_option = 1\n").unwrap();
    assert_eq!(cli(d, &["--config", "bad.toml", "split", "--corpus", "c.jsonl"]).status.code(), Some(1));
}

#[test]
fn baselines_and_stats_write_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cli_ok(d, &["synth", "--out", "c.jsonl", "--narratives", "30"]);
    cli_ok(d, &["stats", "--corpus", "c.jsonl", "--plot-dir", "plots", "--out", "stats.json"]);
    let tsv = std::fs::read_to_string(d.join("plots/positions.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 21);

    for name in ["random", "heuristic", "surprise:xsem", "surprise:xintent", "surprise:xreact"] {
        cli_ok(
            d,
            &["baseline", "--name", name, "--corpus", "c.jsonl", "--seeds", "0,1", "--width", "32", "--out", "r.json"],
        );
        let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
        assert_eq!(report["system"], name);
    }
    cli_ok(
        d,
        &[
            "baseline", "--name", "surprise:xintent", "--corpus", "c.jsonl", "--width", "32", "--plot-dir", "plots",
            "--pred-out", "p.jsonl",
        ],
    );
    assert!(d.join("plots/surprise.tsv").exists());
    assert_eq!(std::fs::read_to_string(d.join("p.jsonl")).unwrap().lines().count(), 30);
    assert_eq!(cli(d, &["baseline", "--name", "distribution", "--corpus", "c.jsonl"]).status.code(), Some(1));
    cli_ok(d, &["baseline", "--name", "distribution", "--train", "c.jsonl", "--corpus", "c.jsonl"]);
}

#[test]
fn evaluate_identical_files_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cli_ok(d, &["synth", "--out", "g.jsonl", "--narratives", "10"]);
    let out = cli_ok(d, &["evaluate", "--pred", "g.jsonl", "--gold", "g.jsonl"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["climax"]["f1"]["mean"], 1.0);
    assert_eq!(report["resolution"]["f1"]["mean"], 1.0);
    assert_eq!(report["resolution"]["distance"]["mean"], 0.0);
}

#[test]
fn split_writes_id_lists() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    cli_ok(d, &["synth", "--out", "c.jsonl", "--narratives", "50"]);
    cli_ok(d, &["split", "--corpus", "c.jsonl", "--ratios", "0.7,0.1,0.2", "--seed", "7", "--out-dir", "s"]);
    let mut all = Vec::new();
    for name in ["train", "validation", "test"] {
        all.extend(std::fs::read_to_string(d.join(format!("s/{name}.ids"))).unwrap().lines().map(String::from));
    }
    all.sort();
    assert_eq!(all, load_corpus(&d.join("c.jsonl")).unwrap().ids());
}
