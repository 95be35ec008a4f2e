//! End-to-end checks of the binary: exit codes, emitted documents, and the
//! byte-identical reproducibility contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gridstack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridstack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, contents: &str) {
    fs::write(path, contents).unwrap();
}

const SMALL_GAME: &str = r#"{
    "chain": {
        "predicted": [5, 8],
        "errorSupport": [1, -1],
        "transition": [[0.4, 0.6], [0.7, 0.3]],
        "initialDist": [0.5, 0.5]
    },
    "pricing": {"alpha": 1, "beta": 1, "gamma1": 1, "gamma2": 1},
    "users": [
        {"theta": 1.0, "dMax": 2, "cMax": 3, "bMax": 1},
        {"theta": 1.2, "dMax": 2, "cMax": 3, "bMax": 1}
    ]
}"#;

#[test]
fn solve_writes_documents_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("game.json");
    write(&config, SMALL_GAME);
    let out = dir.path().join("run");
    let result = gridstack(&["solve", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    for file in ["equilibrium.json", "fip_trace.csv", "manifest.json"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&result.stdout).expect("machine-readable summary");
    assert_eq!(summary["converged"], serde_json::Value::Bool(true));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["configSha256"].as_str().unwrap().len() == 64);
}

#[test]
fn identical_config_and_seed_reproduce_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("game.json");
    write(&config, SMALL_GAME);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out, seed) in [(&out_a, "7"), (&out_b, "7")] {
        let result = gridstack(&[
            "learn",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--iters",
            "60",
            "--eval-every",
            "20",
            "--seed",
            seed,
        ]);
        assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    }
    for file in ["learned_profile.json", "fp_trace.csv", "manifest.json"] {
        let a = fs::read(out_a.join(file)).unwrap();
        let b = fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn invalid_config_exits_one_with_field_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    write(&config, &SMALL_GAME.replace(r#""cMax": 3"#, r#""cMax": 2"#));
    let result = gridstack(&["solve", "--config", config.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("cMax"), "message should name the violated field: {stderr}");
}

#[test]
fn unknown_subcommand_exits_two() {
    let result = gridstack(&["frobnicate"]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn nonconvergence_exits_three_with_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("game.json");
    write(&config, SMALL_GAME);
    let out = dir.path().join("run");
    // kmax=1 cannot finish the sweep on a game that needs several updates.
    let result = gridstack(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--kmax",
        "1",
    ]);
    assert_eq!(result.status.code(), Some(3));
    assert!(out.join("equilibrium.json").exists(), "partial outputs must be written");
}

#[test]
fn estimate_emits_chain_document() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    write(
        &panel,
        "month,day,value\n1,1,120\n1,2,100\n1,3,80\n2,1,80\n2,2,100\n2,3,120\n",
    );
    let config = dir.path().join("estimate.json");
    write(
        &config,
        r#"{"panel": "panel.csv", "scale": 1.0, "supportLevels": [20, 0, -20]}"#,
    );
    let out = dir.path().join("run");
    let result = gridstack(&["estimate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("chain.json")).unwrap()).unwrap();
    assert_eq!(doc["chain"]["predicted"], serde_json::json!([100.0, 100.0, 100.0]));
}

#[test]
fn repro_example3_passes_strict_reference_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let result = gridstack(&["repro", "example3", "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("pricing.json")).unwrap()).unwrap();
    assert_eq!(doc["referenceCheck"]["matches"], serde_json::json!(true));
    assert_eq!(doc["winner"]["alpha"], serde_json::json!(21.0));
    assert_eq!(doc["winner"]["beta"], serde_json::json!(19.0));
    let table = fs::read_to_string(out.join("pricing_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 10, "header plus nine cells");
}

#[test]
fn repro_example4_reports_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let result = gridstack(&["repro", "example4", "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(result.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&result.stdout).unwrap();
    assert_eq!(summary["report"]["dominance"]["dominatedStrategyCount"], serde_json::json!(9));
    assert_eq!(summary["report"]["dominance"]["conditionC1Holds"], serde_json::json!(true));
}

#[test]
fn verify_small_linear_game() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("game.json");
    write(&config, SMALL_GAME);
    let out = dir.path().join("run");
    let result = gridstack(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--iters",
        "200",
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(doc["potentialIdentity"]["holds"], serde_json::json!(true));
    assert_eq!(doc["nashconv"]["isEquilibrium"], serde_json::json!(true));
}
