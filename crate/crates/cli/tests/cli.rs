use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn addressee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_addressee")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = addressee(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_CORPUS: &str = "\
# two short interactions
interactions = 2
utterances_per_interaction = 16
label_sampling = stratified
";

const SHORT_TRAINING: &str = "\
epochs = 2
validation_per_class = 2
";

/// synth -> preprocess -> crossval on a two-interaction desk corpus.
#[test]
fn pipeline_writes_one_report_per_fold() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("synth.txt"), SMALL_CORPUS).unwrap();
    fs::write(d.join("train.txt"), SHORT_TRAINING).unwrap();
    ok(&["synth", "--config", path(&d.join("synth.txt")), "--seed", "3", "--out", path(&d.join("corpus"))]);
    ok(&["preprocess", path(&d.join("corpus")), "--profile", "desk", "--out", path(&d.join("data"))]);
    let out = ok(&[
        "crossval",
        path(&d.join("data")),
        "--experiment",
        "1a",
        "--profile",
        "desk",
        "--config",
        path(&d.join("train.txt")),
        "--quiet",
        "--out",
        path(&d.join("run")),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("folds = 2"));
    for fold in 0..2 {
        let f = d.join("run").join(format!("fold_{fold}"));
        for name in ["checkpoint.bin", "history.txt", "metrics.txt", "confusion.txt", "curves.txt"] {
            assert!(f.join(name).is_file(), "missing {name} in fold {fold}");
        }
        assert_eq!(fs::read_to_string(f.join("history.txt")).unwrap().lines().count(), 2);
    }
    let effective = fs::read_to_string(d.join("run/effective_config.txt")).unwrap();
    assert!(effective.contains("epochs = 2"));
    assert!(effective.contains("face_resolution = 32"));

    // the fold checkpoint scores its own held-out interaction identically
    let metrics = fs::read_to_string(d.join("run/fold_1/metrics.txt")).unwrap();
    let held_out = metrics.lines().find_map(|l| l.strip_prefix("test_interaction = ")).unwrap();
    ok(&[
        "eval",
        path(&d.join("run/fold_1/checkpoint.bin")),
        path(&d.join("data")),
        "--interaction",
        held_out,
        "--out",
        path(&d.join("eval")),
    ]);
    let again = fs::read_to_string(d.join("eval/metrics.txt")).unwrap();
    for line in again.lines() {
        assert!(metrics.contains(line), "eval line {line:?} differs from the fold report");
    }
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let out = addressee(&["crossval", "data", "--experiment", "3x", "--out", "run"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = addressee(&["synth", "--config", path(&cfg), "--out", path(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = addressee(&["crossval", path(&dir.path().join("absent")), "--out", path(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    fs::write(&cfg, "seed = 5\ninteractions = 1\nutterances_per_interaction = 2\n").unwrap();
    let out = dir.path().join("c");
    ok(&["synth", "--config", path(&cfg), "--seed", "9", "--out", path(&out)]);
    let effective = fs::read_to_string(out.join("effective_config.txt")).unwrap();
    assert!(effective.contains("seed = 9"));
    assert!(effective.contains("utterances_per_interaction = 2"));
}

#[test]
fn gradcheck_passes_on_operations() {
    let out = ok(&["gradcheck", "--seeds", "2", "--ops-only"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.lines().count() >= 9);
    assert!(table.lines().all(|l| l.ends_with("PASS")), "{table}");
}
