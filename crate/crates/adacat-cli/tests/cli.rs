//! End-to-end tests of the `adacat` binary: exit codes, output formats, and
//! determinism of the train/eval/sample/grid/verify commands.

use std::path::Path;
use std::process::{Command, Output};

fn adacat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adacat"))
        .args(args)
        .env_remove("ADACAT_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn train_quick(out_dir: &Path, epochs: &str, extra: &[&str]) -> Output {
    let dir = out_dir.to_str().unwrap();
    let mut args = vec![
        "train",
        "--data",
        "synth:mixture1d",
        "--out",
        dir,
        "--n",
        "256",
        "--batch-size",
        "64",
        "--epochs",
        epochs,
        "--seed",
        "1",
    ];
    args.extend_from_slice(extra);
    adacat(&args)
}

#[test]
fn train_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train_quick(tmp.path(), "3", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["checkpoint.json", "report.jsonl", "manifest.json"] {
        assert!(tmp.path().join(file).exists(), "missing {file}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 1);
    assert!(manifest["end_unix"].is_u64());
    let report = std::fs::read_to_string(tmp.path().join("report.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let doc: serde_json::Value = serde_json::from_str(report.lines().next().unwrap()).unwrap();
    assert_eq!(doc["epoch"], 1);
}

#[test]
fn train_rejects_zero_bins() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train_quick(tmp.path(), "0", &["--bins", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bins"));
}

#[test]
fn train_rejects_unknown_data_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let out = adacat(&[
        "train",
        "--data",
        "synth:nope",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_rejects_bad_thread_env() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_adacat"))
        .args([
            "train",
            "--data",
            "synth:mixture1d",
            "--out",
            tmp.path().to_str().unwrap(),
            "--epochs",
            "0",
            "--n",
            "64",
        ])
        .env("ADACAT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ADACAT_THREADS"));
}

#[test]
fn eval_init_model_is_uniform_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train_quick(tmp.path(), "0", &[]);
    assert_eq!(out.status.code(), Some(0));
    let ck = tmp.path().join("checkpoint.json");
    let args = [
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--data",
        "synth:mixture1d",
        "--n",
        "256",
        "--seed",
        "1",
    ];
    let a = adacat(&args);
    assert_eq!(a.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(stdout(&a).trim()).unwrap();
    assert_eq!(doc["nll_nats_model_units"], 0.0);
    assert_eq!(doc["bits_per_dim"], 0.0);
    let b = adacat(&args);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn eval_rejects_dimension_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train_quick(tmp.path(), "0", &[]);
    assert_eq!(out.status.code(), Some(0));
    let ck = tmp.path().join("checkpoint.json");
    let out = adacat(&[
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--data",
        "synth:twospirals",
        "--n",
        "256",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sample_empty_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(train_quick(tmp.path(), "0", &[]).status.code(), Some(0));
    let ck = tmp.path().join("checkpoint.json");
    let ck = ck.to_str().unwrap();

    let empty = adacat(&["sample", "--checkpoint", ck, "--n", "0"]);
    assert_eq!(empty.status.code(), Some(0));
    assert!(stdout(&empty).is_empty());

    let a = adacat(&["sample", "--checkpoint", ck, "--n", "20", "--seed", "5"]);
    let b = adacat(&["sample", "--checkpoint", ck, "--n", "20", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 20);

    let missing = adacat(&["sample", "--checkpoint", "/nonexistent.json", "--n", "1"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn grid_uniform_init_model() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(train_quick(tmp.path(), "0", &[]).status.code(), Some(0));
    let ck = tmp.path().join("checkpoint.json");
    let out = adacat(&["grid", "--checkpoint", ck.to_str().unwrap(), "--resolution", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[1].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn grid_rejects_high_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("data.csv");
    let mut text = String::new();
    for i in 0..32 {
        text.push_str(&format!("{},{},{}\n", i, 31 - i, (i * i) % 17));
    }
    std::fs::write(&csv, text).unwrap();
    let out_dir = tmp.path().join("run");
    let out = adacat(&[
        "train",
        "--data",
        &format!("csv:{}", csv.display()),
        "--dims",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
        "--epochs",
        "0",
        "--bins",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ck = out_dir.join("checkpoint.json");
    let out = adacat(&["grid", "--checkpoint", ck.to_str().unwrap(), "--resolution", "8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_clean_and_fails_with_fault() {
    let clean = adacat(&["verify"]);
    assert_eq!(clean.status.code(), Some(0));
    let text = stdout(&clean);
    for name in [
        "oracle-agreement",
        "gradient-finite-difference",
        "normalization",
        "gradient-bias-demo",
    ] {
        assert!(text.contains(name), "missing check {name}");
    }
    assert!(text.contains("pass"));

    let faulty = adacat(&["verify", "--inject-fault", "flip-psi-grad-sign"]);
    assert_eq!(faulty.status.code(), Some(1));
    assert!(stdout(&faulty).contains("FAIL"));
}

#[test]
fn fixed_quantile_training_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train_quick(tmp.path(), "2", &["--mode", "fixed-quantile"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ck: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("checkpoint.json")).unwrap(),
    )
    .unwrap();
    assert!(ck["model"]["fixed_widths"].is_array());
}
