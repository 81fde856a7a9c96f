mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::synthetic_corpus;

const CONFIG: &str = "min_count = 1\nd_word = 8\nd_h = 10\nd_z = 6\nbatch_size = 32\nkl_anneal_steps = 20\nbeam = 3\npi_epochs = 3\nrepeats = 2\n";

fn svae(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svae"))
        .args(["--config", "run.conf", "--data-dir", "data"])
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = svae(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn lines(n: usize, seed: u64) -> String {
    synthetic_corpus(n, seed).iter().map(|s| s.join(" ") + "\n").collect()
}

fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("run.conf"), CONFIG).unwrap();
    std::fs::write(p.join("train.txt"), lines(200, 1)).unwrap();
    std::fs::write(p.join("test.txt"), lines(20, 2)).unwrap();
    let pairs: String = synthetic_corpus(30, 3)
        .iter()
        .map(|s| format!("1\t{}\t{}\n", s.join(" "), s.join(" ")))
        .collect();
    std::fs::write(p.join("pairs.tsv"), pairs).unwrap();
    ok(
        p,
        &[
            "prepare",
            "--train",
            "train.txt",
            "--test",
            "test.txt",
            "--pi-train",
            "pairs.tsv",
            "--pi-test",
            "pairs.tsv",
        ],
    );
    ok(p, &["train-embeddings", "--epochs", "1"]);
    dir
}

fn value(records: &str, key: &str) -> f64 {
    records
        .lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('\t'))
        .unwrap_or_else(|| panic!("no `{key}` in {records}"))
        .parse()
        .unwrap()
}

#[test]
fn full_pipeline_reports_metrics() {
    let dir = prepared();
    let p = dir.path();
    let train = ok(
        p,
        &[
            "train",
            "--variant",
            "svae",
            "--epochs",
            "1",
            "--out",
            "m.ckpt",
            "--records",
            "all.tsv",
        ],
    );
    assert!(value(&train, "train.steps") > 0.0);
    assert!(value(&train, "train.final_loss").is_finite());

    let lm = ok(p, &["eval-lm", "--checkpoint", "m.ckpt", "--records", "all.tsv"]);
    let bleu = value(&lm, "lm.bleu");
    assert!((0.0..=100.0).contains(&bleu));
    assert_eq!(value(&lm, "lm.n_sentences"), 20.0);

    ok(p, &["train-pi", "--checkpoint", "m.ckpt"]);
    let pi = ok(p, &["eval-pi", "--checkpoint", "m.ckpt"]);
    assert!(pi.lines().any(|l| l.starts_with("pi.error_rate")));

    let encoded = ok(p, &["encode", "--checkpoint", "m.ckpt", "--input", "test.txt"]);
    assert_eq!(encoded.lines().count(), 20);

    let appended = std::fs::read_to_string(p.join("all.tsv")).unwrap();
    assert_eq!(appended, train + &lm);
}

#[test]
fn imputation_requires_matching_scenario() {
    let dir = prepared();
    let p = dir.path();
    ok(
        p,
        &["train", "--task", "impute-s1", "--epochs", "1", "--out", "s1.ckpt"],
    );
    let acc = value(
        &ok(p, &["eval-impute", "--checkpoint", "s1.ckpt", "--scenario", "s1"]),
        "impute.s1.accuracy",
    );
    assert!((0.0..=100.0).contains(&acc));

    let out = svae(p, &["eval-impute", "--checkpoint", "s1.ckpt", "--scenario", "s3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_inputs_are_user_errors() {
    let dir = prepared();
    let p = dir.path();
    assert_eq!(
        svae(p, &["eval-lm", "--checkpoint", "missing.ckpt"]).status.code(),
        Some(1)
    );

    std::fs::write(p.join("junk.ckpt"), b"not a checkpoint").unwrap();
    let out = svae(p, &["eval-lm", "--checkpoint", "junk.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    assert_eq!(
        svae(p, &["--set", "beam=wide", "eval-lm", "--checkpoint", "junk.ckpt"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(svae(p, &["no-such-command"]).status.code(), Some(1));
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = prepared();
    let p = dir.path();
    ok(p, &["train", "--variant", "ae", "--epochs", "1", "--out", "m.ckpt"]);
    let mut bytes = std::fs::read(p.join("m.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(p.join("m.ckpt"), bytes).unwrap();
    let out = svae(p, &["eval-lm", "--checkpoint", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seeds_change_training_but_reruns_do_not() {
    let dir = prepared();
    let p = dir.path();
    let run = |seed: &str, out: &str| {
        ok(
            p,
            &[
                "--seed",
                seed,
                "train",
                "--variant",
                "vae",
                "--epochs",
                "1",
                "--out",
                out,
            ],
        )
    };
    let a = run("5", "a.ckpt");
    let b = run("5", "b.ckpt");
    let c = run("6", "c.ckpt");
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(p.join("a.ckpt")).unwrap(),
        std::fs::read(p.join("b.ckpt")).unwrap()
    );
    assert_ne!(value(&a, "train.final_loss"), value(&c, "train.final_loss"));
}

#[test]
fn resuming_matches_uninterrupted_training() {
    let dir = prepared();
    let p = dir.path();
    let first = ok(p, &["train", "--epochs", "1", "--out", "one.ckpt"]);
    let resumed = ok(
        p,
        &[
            "train",
            "--epochs",
            "2",
            "--resume",
            "one.ckpt",
            "--out",
            "resumed.ckpt",
        ],
    );
    let straight = ok(p, &["train", "--epochs", "2", "--out", "straight.ckpt"]);
    assert_eq!(value(&resumed, "train.steps"), 2.0 * value(&first, "train.steps"));
    assert_eq!(value(&resumed, "train.epochs"), 2.0);
    assert_eq!(resumed, straight);
    assert_eq!(
        ok(p, &["eval-lm", "--checkpoint", "resumed.ckpt"]),
        ok(p, &["eval-lm", "--checkpoint", "straight.ckpt"])
    );
}
