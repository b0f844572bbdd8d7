use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coseg::pipeline::hash_tree;
use serde_json::Value;

const SMALL: &str = r#"{
    "corpus": {"n_train": 8, "n_test": 4},
    "peers": {"epochs": 2, "warmup_epochs": 1},
    "final": {"epochs": 2},
    "grid": {"noise_types": ["TypeI"], "nols": [0.5]}
}"#;

fn coseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coseg")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success(), "expected failure, stdout: {}", String::from_utf8_lossy(&out.stdout));
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"].clone()
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    stdout_json(&coseg(&["generate", "--config", &cfg, "--out", path(&a)]));
    stdout_json(&coseg(&["generate", "--config", &cfg, "--out", path(&b)]));
    assert_eq!(hash_tree(&a).unwrap(), hash_tree(&b).unwrap());
    assert_eq!(fs::read(a.join("run_metadata.json")).unwrap(), fs::read(b.join("run_metadata.json")).unwrap());
}

#[test]
fn existing_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("corpus");
    stdout_json(&coseg(&["generate", "--config", &cfg, "--out", path(&out)]));
    let err = error_json(&coseg(&["generate", "--config", &cfg, "--out", path(&out)]));
    assert_eq!(err["stage"], "generate");
    assert!(err["message"].as_str().unwrap().contains("--force"));
    stdout_json(&coseg(&["generate", "--config", &cfg, "--out", path(&out), "--force"]));
}

#[test]
fn missing_config_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let err = error_json(&coseg(&["generate", "--config", path(&missing), "--out", path(&dir.path().join("o"))]));
    assert!(err["message"].as_str().unwrap().contains(path(&missing)));
}

#[test]
fn alpha_is_derived_from_the_noise_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"corpus": {"n_train": 4, "n_test": 2}, "noise": {"nol": 0.7}}"#);
    let out = dir.path().join("corpus");
    stdout_json(&coseg(&["generate", "--config", &cfg, "--out", path(&out)]));
    let meta: Value = serde_json::from_slice(&fs::read(out.join("run_metadata.json")).unwrap()).unwrap();
    assert!((meta["cell"]["peers"]["alpha"].as_f64().unwrap() - 0.3).abs() < 1e-12);
    assert_eq!(meta["cell"]["alpha_overridden"], false);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    stdout_json(&coseg(&["generate", "--config", &cfg, "--out", path(&a)]));
    stdout_json(&coseg(&["generate", "--config", &cfg, "--seed", "9", "--out", path(&b)]));
    let meta: Value = serde_json::from_slice(&fs::read(b.join("run_metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["seed"], 9);
    assert_eq!(meta["config"]["peers"]["seed"], 9);
    assert_ne!(hash_tree(&a).unwrap(), hash_tree(&b).unwrap());
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let d = |name: &str| dir.path().join(name);
    stdout_json(&coseg(&["generate", "--config", &cfg, "--out", path(&d("corpus"))]));

    // stage order is enforced before anything is written
    let err = error_json(&coseg(&[
        "correct", "--config", &cfg, "--train", path(&d("noisy/noisy.jsonl")), "--peers", path(&d("peers")), "--out",
        path(&d("corrected")),
    ]));
    assert_eq!(err["stage"], "correct");
    assert_eq!(err["kind"], "stage");

    stdout_json(&coseg(&["corrupt", "--config", &cfg, "--corpus", path(&d("corpus")), "--out", path(&d("noisy"))]));
    stdout_json(&coseg(&["cotrain", "--config", &cfg, "--train", path(&d("noisy/noisy.jsonl")), "--out", path(&d("peers"))]));
    let corrected = stdout_json(&coseg(&[
        "correct", "--config", &cfg, "--train", path(&d("noisy/noisy.jsonl")), "--peers", path(&d("peers")), "--out",
        path(&d("corrected")),
    ]));
    assert_eq!(corrected["flagged"], 4);
    stdout_json(&coseg(&["retrain", "--config", &cfg, "--train", path(&d("corrected/updated.jsonl")), "--out", path(&d("final"))]));
    let eval_file = d("eval.json");
    let eval = stdout_json(&coseg(&[
        "evaluate", "--config", &cfg, "--checkpoint", path(&d("final/final.ckpt")), "--test", path(&d("corpus/test.jsonl")),
        "--out", path(&eval_file),
    ]));
    assert_eq!(eval["n_samples"], 4);
    let stored: Value = serde_json::from_slice(&fs::read(&eval_file).unwrap()).unwrap();
    assert_eq!(stored, eval);
    for file in ["corrected/correction_report.json", "corrected/scores.csv", "peers/cotrain_trace.csv", "final/curve.csv"] {
        assert!(d(file).is_file(), "{file} missing");
    }
}

#[test]
fn run_all_writes_results_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let summary = stdout_json(&coseg(&["run-all", "--config", &cfg, "--out", path(&out)]));
    assert_eq!(summary["cells"].as_array().unwrap().len(), 1);
    let table = fs::read_to_string(out.join("results_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);

    // re-evaluating the stored clean baseline reproduces its row exactly
    let eval = stdout_json(&coseg(&[
        "evaluate", "--config", &cfg, "--checkpoint", path(&out.join("baseline_clean/final.ckpt")), "--test",
        path(&out.join("corpus/test.jsonl")),
    ]));
    let row = table.lines().nth(1).unwrap();
    assert_eq!(row, format!("none,0,{},{},,", eval["acc"].as_f64().unwrap(), eval["dic"].as_f64().unwrap()));
}

#[test]
fn usage_and_config_errors_are_json() {
    let err = error_json(&coseg(&["frobnicate"]));
    assert_eq!(err["kind"], "usage");
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"peers": {"alpha": 0.4}}"#);
    let err = error_json(&coseg(&["generate", "--config", &cfg, "--out", path(&dir.path().join("o"))]));
    assert_eq!(err["kind"], "config");
    assert!(coseg(&["--help"]).status.success());
}
