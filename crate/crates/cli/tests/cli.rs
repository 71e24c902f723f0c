use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
total_steps = 240
start_steps = 64
eval_every = 120
eval_episodes = 2
correlation_samples = 200

[agent]
batch_size = 32
hidden = [16]

[saliency]
hidden = 16
warmup_steps = 100
"#;

type Case<'a> = (Vec<&'a str>, Vec<(&'a str, &'a str)>);

fn sgfd(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sgfd"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "total_step = 5").unwrap();
    let cases: Vec<Case> = vec![
        (
            vec!["train", "--config", bad.to_str().unwrap(), "--out", out],
            vec![],
        ),
        (
            vec!["train", "--config", "/nonexistent/x.toml", "--out", out],
            vec![],
        ),
        (
            vec!["train", "--config", &cfg, "--method", "fancy", "--out", out],
            vec![],
        ),
        (
            vec!["train", "--config", &cfg, "--steps", "10", "--out", out],
            vec![],
        ),
        (
            vec!["train", "--config", &cfg, "--out", out],
            vec![("SGFD_NOPE", "1")],
        ),
        (
            vec!["train", "--config", &cfg, "--out", out],
            vec![("SGFD_AGENT_TAU", "3.0")],
        ),
        (vec!["accept", "nonsense"], vec![]),
        (
            vec!["eval", "--run-dir", out, "--suite", "sideways"],
            vec![],
        ),
    ];
    for (args, env) in cases {
        let result = sgfd(&args, &env);
        assert_eq!(
            result.status.code(),
            Some(2),
            "{args:?} {env:?}: {}",
            String::from_utf8_lossy(&result.stderr)
        );
    }
}

#[test]
fn divergence_exits_with_three_and_keeps_an_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let result = sgfd(
        &[
            "train",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--method",
            "no_decorr",
        ],
        &[("SGFD_AGENT_LEARNING_RATE", "1e200")],
    );
    assert_eq!(
        result.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], false);
    assert_eq!(manifest["status"], "diverged");
}

#[test]
fn repeated_training_is_deterministic_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut hashes = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let result = sgfd(
            &[
                "train",
                "--config",
                &cfg,
                "--seed",
                "3",
                "--out",
                out.to_str().unwrap(),
            ],
            &[],
        );
        assert!(
            result.status.success(),
            "{}",
            String::from_utf8_lossy(&result.stderr)
        );
        hashes.push(
            stdout_json(&result)["content_hash"]
                .as_str()
                .unwrap()
                .to_string(),
        );
    }
    assert_eq!(hashes[0], hashes[1]);

    let run = dir.path().join("a");
    let result = sgfd(
        &[
            "eval",
            "--run-dir",
            run.to_str().unwrap(),
            "--episodes",
            "3",
        ],
        &[],
    );
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let summary = stdout_json(&result);
    assert_eq!(summary["extrapolation"]["episodes"], 9);
    assert!(summary["interpolation"]["mean"].is_number());
    let result = sgfd(
        &[
            "eval",
            "--run-dir",
            run.to_str().unwrap(),
            "--suite",
            "extrapolation",
        ],
        &[],
    );
    let summary = stdout_json(&result);
    assert!(summary.get("interpolation").is_none());
}

#[test]
fn gen_then_report_round_trips_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data");
    let result = sgfd(
        &[
            "gen",
            "--config",
            &cfg,
            "--out",
            data.to_str().unwrap(),
            "--per-env",
            "100",
        ],
        &[],
    );
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    for name in [
        "dataset_train.csv",
        "dataset_interpolation.csv",
        "dataset_extrapolation.csv",
        "suite.json",
    ] {
        assert!(data.join(name).exists(), "{name}");
    }
    let dataset = data.join("dataset_train.csv");
    let reports = dir.path().join("reports");
    let result = sgfd(
        &[
            "report",
            "--config",
            &cfg,
            "--dataset",
            dataset.to_str().unwrap(),
            "--out",
            reports.to_str().unwrap(),
        ],
        &[],
    );
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let arms = stdout_json(&result);
    let weights = reports.join("weights_sgfd.csv");
    assert!(weights.exists());

    let again = dir.path().join("again");
    let result = sgfd(
        &[
            "report",
            "--config",
            &cfg,
            "--dataset",
            dataset.to_str().unwrap(),
            "--weights",
            weights.to_str().unwrap(),
            "--out",
            again.to_str().unwrap(),
        ],
        &[],
    );
    assert!(
        result.status.success(),
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let pair = stdout_json(&result);
    assert_eq!(pair["raw"], arms["raw"]);
    assert_eq!(pair["weighted"], arms["sgfd"]);
    assert!(again.join("correlation_weighted.csv").exists());
}

#[test]
fn accept_prints_one_line_per_criterion() {
    let result = sgfd(&["accept", "identities"], &[]);
    assert!(result.status.success());
    let text = String::from_utf8(result.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(
        text.starts_with("[PASS] criterion 1 (identities)"),
        "{text}"
    );
}
