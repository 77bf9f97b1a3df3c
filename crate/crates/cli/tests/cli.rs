use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const DATA: &str = "blobs:C=3,d=6,m=40,spread=0.2";

fn otta(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otta")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = otta(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn model(dir: &Path) -> PathBuf {
    ok(dir, &["--seed", "2", "train-source", "--dataset", DATA, "--hidden", "8,8", "--epochs", "2", "--batch-size", "16"]);
    dir.join("model.json")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn adapt_none_is_deterministic_and_leaves_the_checkpoint_alone() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(dir.path());
    let before = std::fs::read(&m).unwrap();
    for report in ["a.csv", "b.csv"] {
        let line = ok(
            dir.path(),
            &["--seed", "3", "adapt", "--model", "model.json", "--dataset", DATA, "--loss", "none", "--batch-size", "16", "--report", report],
        );
        assert!(line.starts_with("adapt: loss=none final_err="), "{line}");
        assert_eq!(line.lines().count(), 1);
    }
    assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), std::fs::read(dir.path().join("b.csv")).unwrap());
    ok(dir.path(), &["adapt", "--model", "model.json", "--dataset", DATA, "--loss", "comm", "--batch-size", "16", "--lr", "0.5"]);
    assert_eq!(std::fs::read(&m).unwrap(), before);
}

#[test]
fn near_uniform_simplex_init_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = otta(dir.path(), &["simplex", "--init", "0.3333,0.3333,0.3334", "--loss", "comm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--init"));
}

#[test]
fn explicit_protocol_flags_equal_the_defaults() {
    let dir = tempfile::tempdir().unwrap();
    model(dir.path());
    let common = ["adapt", "--model", "model.json", "--dataset", DATA];
    let mut explicit = common.to_vec();
    explicit.extend(["--loss", "comm", "--lr", "0.005", "--batch-size", "128", "--params", "affine", "--report", "x.csv"]);
    let mut implicit = common.to_vec();
    implicit.extend(["--report", "y.csv"]);
    ok(dir.path(), &explicit);
    ok(dir.path(), &implicit);
    let (mut x, mut y) = (json(&dir.path().join("x.config.json")), json(&dir.path().join("y.config.json")));
    assert_eq!(x["batch-size"], 128);
    assert_eq!(x["lr"], 0.005);
    assert_eq!(x["params"], "affine");
    x.as_object_mut().unwrap().remove("report");
    y.as_object_mut().unwrap().remove("report");
    assert_eq!(x, y);
    assert_eq!(std::fs::read(dir.path().join("x.csv")).unwrap(), std::fs::read(dir.path().join("y.csv")).unwrap());
}

#[test]
fn unknown_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(otta(dir.path(), &["adapt", "--model", "m.json", "--bogus"]).status.code(), Some(1));
    assert_eq!(otta(dir.path(), &["frobnicate"]).status.code(), Some(1));
    std::fs::write(dir.path().join("c.json"), r#"{"no-such-flag": 1}"#).unwrap();
    assert_eq!(otta(dir.path(), &["simplex", "--config", "c.json"]).status.code(), Some(1));
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"command": "simplex", "loss": "em", "steps": 7, "lr": 0.2}"#).unwrap();
    ok(dir.path(), &["simplex", "--config", "c.json", "--steps", "4"]);
    let cfg = json(&dir.path().join("trace.config.json"));
    assert_eq!(cfg["loss"], "em");
    assert_eq!(cfg["lr"], 0.2);
    assert_eq!(cfg["steps"], 4);
    let rows = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 5);
    let wrong = otta(dir.path(), &["adapt", "--config", "c.json"]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn outputs_reproduce_from_the_resolved_config_alone() {
    let dir = tempfile::tempdir().unwrap();
    model(dir.path());
    ok(dir.path(), &["--seed", "5", "--out-dir", "runs", "adapt", "--model", "model.json", "--dataset", DATA, "--batch-size", "32"]);
    let elsewhere = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("runs/report.config.json");
    ok(elsewhere.path(), &["adapt", "--config", cfg.to_str().unwrap(), "--report", "again.csv"]);
    let a = std::fs::read(dir.path().join("runs/report.csv")).unwrap();
    let b = std::fs::read(dir.path().join("runs/again.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn numeric_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    model(dir.path());
    let out = otta(
        dir.path(),
        &["adapt", "--model", "model.json", "--dataset", DATA, "--loss", "em", "--lr", "1e300", "--batch-size", "16"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch"));
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    model(dir.path());
    let base = ["sweep", "--model", "model.json", "--dataset", DATA, "--batch-sizes", "8,24", "--losses", "em,comm", "--seeds", "1..3"];
    let mut one = base.to_vec();
    one.extend(["--threads", "1", "--out", "one.csv", "--svg", "one.svg"]);
    let mut two = base.to_vec();
    two.extend(["--threads", "2", "--out", "two.csv"]);
    let line = ok(dir.path(), &one);
    assert!(line.contains("cells=12 failed=0"), "{line}");
    ok(dir.path(), &two);
    let csv = std::fs::read_to_string(dir.path().join("one.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(dir.path().join("two.csv")).unwrap());
    assert_eq!(csv.lines().next(), Some("loss,batch_size,seed,final_err"));
    assert_eq!(csv.lines().count(), 13);
    assert!(std::fs::read_to_string(dir.path().join("one.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn diagnose_and_gen_data_write_declared_headers() {
    let dir = tempfile::tempdir().unwrap();
    model(dir.path());
    ok(dir.path(), &["diagnose", "--model", "model.json", "--dataset", DATA, "--bins", "5"]);
    let hist = std::fs::read_to_string(dir.path().join("hist.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("quantity,bin_lo,bin_hi,count_correct,count_incorrect"));
    assert_eq!(hist.lines().count(), 11);

    ok(dir.path(), &["--seed", "4", "gen-data", "--classes", "3", "--dim", "2", "--per-class", "5", "--out", "d/data.csv"]);
    let data = std::fs::read_to_string(dir.path().join("d/data.csv")).unwrap();
    assert_eq!(data.lines().next(), Some("label,f0,f1"));
    assert_eq!(data.lines().count(), 16);

    // a generated CSV trains like any other dataset
    ok(dir.path(), &["train-source", "--dataset", "d/data.csv", "--hidden", "4", "--epochs", "1", "--batch-size", "5", "--out", "csv_model.json"]);
}
