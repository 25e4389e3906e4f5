use std::fs;
use std::path::Path;

use jet::cli::main_with_args;

fn jet(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("jet").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// synth -> label(hard) -> train in `dir`, returning the labeled path.
fn prepare(dir: &Path, size: &str, extra: &[&str]) -> std::path::PathBuf {
    assert_eq!(jet(&["synth", "--out-dir", p(dir), "--size", size, "--seed", "3"]), 0);
    let corpus = dir.join("corpus.jsonl");
    assert_eq!(jet(&["label", "--out-dir", p(dir), "--input", p(&corpus), "--mode", "hard"]), 0);
    let labeled = dir.join("labeled.hard.jsonl");
    let mut args = vec!["train", "--out-dir", p(dir), "--input", p(&labeled), "--epochs", "2", "--learning-rate", "0.002"];
    args.extend_from_slice(extra);
    assert_eq!(jet(&args), 0);
    labeled
}

#[test]
fn end_to_end_leaves_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let labeled = prepare(d, "12", &[]);
    let corpus = d.join("corpus.jsonl");
    let before = fs::read(&corpus).unwrap();
    let labeled_before = fs::read(&labeled).unwrap();
    assert_eq!(
        jet(&["restore", "--out-dir", p(d), "--checkpoint", p(&d.join("model.ckpt")), "--input", p(&corpus), "--beam-size", "2", "--max-len", "12"]),
        0
    );
    assert_eq!(
        jet(&["evaluate", "--out-dir", p(d), "--predictions", p(&d.join("predictions.jsonl")), "--gold", p(&corpus), "--labels", p(&labeled)]),
        0
    );
    assert_eq!(fs::read(&corpus).unwrap(), before);
    assert_eq!(fs::read(&labeled).unwrap(), labeled_before);
    for f in ["config.toml", "vocab.json", "loss_log.csv", "train_summary.json", "predictions.jsonl", "report.json", "report.txt"] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["samples"], 12);

    let dup = d.join("dup.jsonl");
    fs::write(
        &dup,
        concat!(
            r#"{"id":"a","context":["x y"],"utterance":"z","reference":"z y"}"#, "\n",
            r#"{"id":"a","context":["x y"],"utterance":"z","reference":"z x"}"#, "\n",
        ),
    )
    .unwrap();
    assert_eq!(jet(&["restore", "--out-dir", p(&d.join("dup")), "--checkpoint", p(&d.join("model.ckpt")), "--input", p(&dup), "--max-len", "4"]), 2);
}

#[test]
fn soft_and_hard_labels_go_to_distinct_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(jet(&["synth", "--out-dir", p(d), "--size", "5"]), 0);
    let corpus = d.join("corpus.jsonl");
    assert_eq!(jet(&["label", "--out-dir", p(d), "--input", p(&corpus), "--mode", "soft"]), 1);
    assert_eq!(jet(&["label", "--out-dir", p(d), "--input", p(&corpus), "--mode", "soft", "--hash-fallback"]), 0);
    assert_eq!(jet(&["label", "--out-dir", p(d), "--input", p(&corpus), "--mode", "hard"]), 0);
    let soft = fs::read_to_string(d.join("labeled.soft.jsonl")).unwrap();
    let hard = fs::read_to_string(d.join("labeled.hard.jsonl")).unwrap();
    assert_ne!(soft, hard);
    assert_eq!(soft.lines().count(), 5);
}

#[test]
fn fraction_and_alpha_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d, "30", &["--fraction", "0.1", "--alpha", "0"]);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(d.join("train_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["samples"], 3);
    let log = fs::read_to_string(d.join("loss_log.csv")).unwrap();
    let picker: Vec<&str> = log.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(picker.len(), 2);
    assert!(picker.iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(jet(&["frobnicate"]), 1);
    assert_eq!(jet(&["label", "--out-dir", p(d), "--input", p(&d.join("absent.jsonl"))]), 1);

    let gold = d.join("gold.jsonl");
    fs::write(
        &gold,
        concat!(
            r#"{"id":"a","context":["x y"],"utterance":"z","reference":"z y"}"#, "\n",
            r#"{"id":"b","context":["x y"],"utterance":"z","reference":"z x"}"#, "\n",
        ),
    )
    .unwrap();
    let preds = d.join("preds.jsonl");
    fs::write(&preds, r#"{"id":"a","prediction":"z y"}"#.to_string() + "\n").unwrap();
    assert_eq!(jet(&["evaluate", "--out-dir", p(d), "--predictions", p(&preds), "--gold", p(&gold)]), 2);
    let err = jet::evaluation::evaluate(
        &jet::inference::load_predictions(&preds).unwrap(),
        &jet::corpus::load_corpus(&gold, jet::corpus::CorpusFormat::Jsonl).unwrap(),
        None,
        &jet::corpus::LanguageConfig::english(),
        &Default::default(),
    )
    .unwrap_err();
    assert!(err.to_string().contains('b'), "{err}");
}
