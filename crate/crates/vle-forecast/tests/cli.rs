//! End-to-end checks of the `vle-forecast` binary: exit codes, output
//! files, run manifests, and flag/config precedence.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vle-forecast"));
    // Keep the environment from leaking a seed into tests that omit --seed.
    cmd.env_remove("VLE_FORECAST_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn vle-forecast")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest_commands(dir: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("manifest.jsonl")).expect("manifest.jsonl");
    text.lines()
        .map(|line| {
            let v: serde_json::Value = serde_json::from_str(line).expect("manifest line");
            v["command"].as_str().expect("command field").to_string()
        })
        .collect()
}

/// Generates a small dataset and returns its directory path inside `root`.
fn synth_into(root: &Path, students: usize, seed: &str) -> std::path::PathBuf {
    let data = root.join("data");
    let out = run(&[
        "synth",
        "--students",
        &students.to_string(),
        "--seed",
        seed,
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_success(&out);
    data
}

// ============================================================================
// Exit codes
// ============================================================================

#[test]
fn usage_errors_exit_2() {
    let unknown_subcommand = run(&["frobnicate"]);
    assert_eq!(unknown_subcommand.status.code(), Some(2));
    let unknown_flag = run(&["validate", "--bogus"]);
    assert_eq!(unknown_flag.status.code(), Some(2));
    let missing_seed = run(&["synth", "--out", "/tmp/never-written"]);
    assert_eq!(missing_seed.status.code(), Some(2));
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["train", "--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_1() {
    let missing_dir = run(&["validate", "--data-dir", "/nonexistent-vle-data"]);
    assert_eq!(missing_dir.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing_dir.stderr).contains("error:"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = bin()
        .args(["synth", "--students", "60", "--out", data.to_str().unwrap()])
        .env("VLE_FORECAST_SEED", "99")
        .output()
        .unwrap();
    assert_success(&out);
    let ledger: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("ledger.json")).unwrap()).unwrap();
    assert_eq!(ledger["seed"], 99);
}

// ============================================================================
// The full workflow
// ============================================================================

#[test]
fn synth_validate_preprocess_train_evaluate_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_into(tmp.path(), 150, "5");

    assert_success(&run(&["validate", "--data-dir", data.to_str().unwrap()]));

    let feat = tmp.path().join("feat");
    assert_success(&run(&[
        "preprocess",
        "--data-dir",
        data.to_str().unwrap(),
        "--per-student",
        "--seed",
        "5",
        "--out",
        feat.to_str().unwrap(),
    ]));
    assert!(feat.join("features.csv").is_file());
    assert!(feat.join("sidecar.json").is_file());
    assert_eq!(manifest_commands(&feat), ["preprocess"]);

    let features_file = feat.join("features.csv");
    let corr = tmp.path().join("corr");
    assert_success(&run(&[
        "correlate",
        "--features-file",
        features_file.to_str().unwrap(),
        "--out",
        corr.to_str().unwrap(),
    ]));
    assert!(corr.join("correlations.csv").is_file());

    let model = tmp.path().join("model");
    assert_success(&run(&[
        "train",
        "--features-file",
        features_file.to_str().unwrap(),
        "--epochs",
        "2",
        "--batch-size",
        "64",
        "--seed",
        "5",
        "--out",
        model.to_str().unwrap(),
    ]));
    for file in ["checkpoint.json", "history.csv", "history.svg"] {
        assert!(model.join(file).is_file(), "missing {file}");
    }
    assert_eq!(manifest_commands(&model), ["train"]);

    let eval = tmp.path().join("eval");
    assert_success(&run(&[
        "evaluate",
        "--checkpoint",
        model.join("checkpoint.json").to_str().unwrap(),
        "--features-file",
        features_file.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]));
    for file in ["report.json", "metrics.csv", "confusion.csv", "roc.svg"] {
        assert!(eval.join(file).is_file(), "missing {file}");
    }

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    let accuracy = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&accuracy));
}

#[test]
fn evaluate_rejects_a_checkpoint_from_other_features() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_into(tmp.path(), 120, "8");

    let preprocess = |pct: &str, dir: &Path| {
        assert_success(&run(&[
            "preprocess",
            "--data-dir",
            data.to_str().unwrap(),
            "--duration-pct",
            pct,
            "--seed",
            "8",
            "--out",
            dir.to_str().unwrap(),
        ]));
    };
    let feat_full = tmp.path().join("full");
    let feat_half = tmp.path().join("half");
    preprocess("100", &feat_full);
    preprocess("50", &feat_half);

    let model = tmp.path().join("model");
    assert_success(&run(&[
        "train",
        "--features-file",
        feat_full.join("features.csv").to_str().unwrap(),
        "--epochs",
        "1",
        "--batch-size",
        "64",
        "--seed",
        "8",
        "--out",
        model.to_str().unwrap(),
    ]));

    let out = run(&[
        "evaluate",
        "--checkpoint",
        model.join("checkpoint.json").to_str().unwrap(),
        "--features-file",
        feat_half.join("features.csv").to_str().unwrap(),
        "--out",
        tmp.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different feature transform"));
}

#[test]
fn config_file_sets_hyperparameters_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_into(tmp.path(), 100, "12");
    let feat = tmp.path().join("feat");
    assert_success(&run(&[
        "preprocess",
        "--data-dir",
        data.to_str().unwrap(),
        "--per-student",
        "--seed",
        "12",
        "--out",
        feat.to_str().unwrap(),
    ]));
    let features_file = feat.join("features.csv");

    let config = tmp.path().join("train.conf");
    std::fs::write(&config, "epochs = 1\nbatch_size = 64\nlearning_rate = 0.002\n").unwrap();

    let epochs_in_history = |dir: &Path| {
        std::fs::read_to_string(dir.join("history.csv"))
            .unwrap()
            .lines()
            .count()
            - 1
    };

    let from_file = tmp.path().join("m1");
    assert_success(&run(&[
        "train",
        "--features-file",
        features_file.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "12",
        "--out",
        from_file.to_str().unwrap(),
    ]));
    assert_eq!(epochs_in_history(&from_file), 1);

    let overridden = tmp.path().join("m2");
    assert_success(&run(&[
        "train",
        "--features-file",
        features_file.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--epochs",
        "2",
        "--seed",
        "12",
        "--out",
        overridden.to_str().unwrap(),
    ]));
    assert_eq!(epochs_in_history(&overridden), 2);
}

#[test]
fn sweep_writes_one_directory_per_percentage_and_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_into(tmp.path(), 150, "20");
    let out_dir = tmp.path().join("sweep");
    assert_success(&run(&[
        "sweep",
        "--data-dir",
        data.to_str().unwrap(),
        "--pcts",
        "50,100",
        "--epochs",
        "1",
        "--batch-size",
        "64",
        "--seed",
        "20",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    for sub in ["pct_050", "pct_100"] {
        for file in ["features.csv", "checkpoint.json", "report.json"] {
            assert!(out_dir.join(sub).join(file).is_file(), "missing {sub}/{file}");
        }
    }
    let summary = std::fs::read_to_string(out_dir.join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("duration_pct,status,n_train,n_test,accuracy"));
    assert!(lines[1].starts_with("50,ok,"));
    assert!(lines[2].starts_with("100,ok,"));
    assert_eq!(manifest_commands(&out_dir), ["sweep"]);
}

#[test]
fn preprocess_runs_are_deterministic_on_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_into(tmp.path(), 90, "31");
    let (out_a, out_b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&out_a, &out_b] {
        assert_success(&run(&[
            "preprocess",
            "--data-dir",
            data.to_str().unwrap(),
            "--seed",
            "31",
            "--out",
            dir.to_str().unwrap(),
        ]));
    }
    for file in ["features.csv", "sidecar.json"] {
        assert_eq!(
            std::fs::read(out_a.join(file)).unwrap(),
            std::fs::read(out_b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}
