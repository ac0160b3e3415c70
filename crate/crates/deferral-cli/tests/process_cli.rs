//! End-to-end runs of the `defer` binary: exit codes, error wording, the
//! verification table, and the worker-count override.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn defer(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_defer"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, value: serde_json::Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn unknown_config_key_is_named_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        serde_json::json!({ "kind": "gaussian_table1", "trails": 5 }),
    );
    let out = defer(&["run", &path], &[]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("trails"), "stderr must name the bad key: {stderr}");
}

#[test]
fn missing_config_file_is_an_error() {
    let out = defer(&["run", "/nonexistent/config.json"], &[]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/config.json"), "stderr was: {stderr}");
}

#[test]
fn verify_prints_a_pass_line_per_check_and_exits_zero() {
    let out = defer(&["verify"], &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "verify failed:\n{stdout}");
    assert_eq!(stdout.matches("[PASS]").count(), 12, "table was:\n{stdout}");
    assert!(!stdout.contains("[FAIL]"));
}

#[test]
fn run_produces_artifacts_and_respects_worker_override() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let path = write_config(
        dir.path(),
        serde_json::json!({
            "kind": "gaussian_table1",
            "trials": 1,
            "seed": 3,
            "dim": 3,
            "n_train": 80,
            "n_test": 60,
            "epochs": 5,
            "methods": ["lce", "confidence"],
            "out_dir": out_dir,
        }),
    );
    let out = defer(&["run", &path], &[("DEFER_WORKERS", "1")]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for artifact in ["results.json", "curves.csv", "run.log"] {
        assert!(out_dir.join(artifact).exists(), "{artifact} missing");
    }
}

#[test]
fn zero_workers_is_rejected_naming_the_variable() {
    let out = defer(&["verify"], &[("DEFER_WORKERS", "0")]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("DEFER_WORKERS"), "stderr was: {stderr}");
}

#[test]
fn gen_data_subcommand_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    let path = write_config(
        dir.path(),
        serde_json::json!({
            "generator": "gaussian_mixture",
            "dim": 4,
            "n_train": 40,
            "n_test": 20,
            "seed": 2,
            "attach_expert": true,
            "out_dir": out_dir,
        }),
    );
    let out = defer(&["gen-data", &path], &[]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for artifact in ["train.csv", "test.csv", "manifest.json"] {
        assert!(out_dir.join(artifact).exists(), "{artifact} missing");
    }
}
