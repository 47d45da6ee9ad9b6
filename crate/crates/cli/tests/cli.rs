use std::path::Path;
use std::process::{Command, Output};

fn stgc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stgc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_train_eval_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.bin");
    let config = dir.path().join("config.json");
    let ckpt = dir.path().join("model.ckpt");
    let graph = dir.path().join("graph.txt");

    let out = stgc(&["synth", "--out", p(&data), "--per-class", "3", "--test-per-class", "2", "--joints", "6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(&config, r#"{"epochs": 2, "batch_size": 4, "aug_copies": 1, "model": {"widths": [3, 4]}}"#).unwrap();
    let out = stgc(&[
        "train", "--data", p(&data), "--config", p(&config), "--out", p(&ckpt), "--segments", "6", "--jitter", "false",
        "--seed", "3", "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
    let meta = std::fs::read_to_string(dir.path().join("model.ckpt.json")).unwrap();
    assert!(meta.contains("\"segments\": 6"));

    let out = stgc(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--json"]);
    assert!(out.status.success());
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let acc = metrics["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(metrics["confusion"].as_array().unwrap().len(), 4);

    std::fs::write(&graph, "# path\n3 2\n0 1\n1 2 0.5\n").unwrap();
    let out = stgc(&["spectrum", "--ckpt", p(&ckpt), "--graph", p(&graph)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lambda,channel,response"));
    // 3 eigenvalues × 3 input channels
    assert_eq!(lines.count(), 9);
}

#[test]
fn verify_prints_table_and_json() {
    let out = stgc(&["verify", "--suite", "spectral"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 4);
    assert!(text.lines().all(|l| l.starts_with("PASS")));

    let out = stgc(&["verify", "--suite", "gradients", "--json"]);
    assert!(out.status.success());
    let checks: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(checks.as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn error_categories_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let bad = dir.path().join("bad.bin");
    let config = dir.path().join("config.json");
    let data = dir.path().join("data.bin");
    std::fs::write(&bad, "not a dataset\n").unwrap();

    assert_eq!(stgc(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(stgc(&["verify", "--suite", "nope"]).status.code(), Some(5));
    assert_eq!(
        stgc(&["train", "--data", p(&missing), "--out", p(&dir.path().join("m"))]).status.code(),
        Some(3)
    );
    assert_eq!(
        stgc(&["train", "--data", p(&bad), "--out", p(&dir.path().join("m"))]).status.code(),
        Some(4)
    );

    assert!(stgc(&["synth", "--out", p(&data), "--per-class", "2", "--test-per-class", "1"]).status.success());
    std::fs::write(&config, r#"{"epochs": 1, "unknown_key": true}"#).unwrap();
    assert_eq!(
        stgc(&["train", "--data", p(&data), "--config", p(&config), "--out", p(&dir.path().join("m"))]).status.code(),
        Some(4)
    );
    std::fs::write(&config, r#"{"epochs": 1, "batch_size": 0}"#).unwrap();
    assert_eq!(
        stgc(&["train", "--data", p(&data), "--config", p(&config), "--out", p(&dir.path().join("m"))]).status.code(),
        Some(5)
    );
    std::fs::write(&config, r#"{"epochs": 5, "learning_rate": 1e200, "aug_copies": 1, "model": {"widths": [3, 3]}}"#).unwrap();
    assert_eq!(
        stgc(&["train", "--data", p(&data), "--config", p(&config), "--out", p(&dir.path().join("m")), "--quiet"])
            .status
            .code(),
        Some(6)
    );
}
