use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[data]
generator = "blobs"
classes = 4
dim = 3
train_per_class = 10
test_per_class = 5
separation = 4.0

[model]
hidden = [8]

[loss]
variant = "ss-lr"

[optimizer]
kind = "adam"
learning_rate = 1e-2

[training]
epochs = 3
batch_size = 8
seed = 1

[output]
run_name = "small"
"#;

fn run(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_focuslr"))
        .args(args)
        .env("FOCUSLR_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn train_writes_per_seed_outputs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = run(&["train", &cfg, "--seeds", "2..4"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for seed in 2..=4 {
        let seed_dir = dir.path().join(format!("small/seed-{seed}"));
        for file in [
            "checkpoint.json".to_string(),
            "eval.json".to_string(),
            "config.resolved.toml".to_string(),
            format!("small-seed{seed}.trace.csv"),
            format!("small-seed{seed}.trace.json"),
        ] {
            assert!(seed_dir.join(&file).is_file(), "missing {file}");
        }
        let resolved = fs::read_to_string(seed_dir.join("config.resolved.toml")).unwrap();
        assert!(resolved.contains(&format!("seed = {seed}")));
    }
    let summary = fs::read_to_string(dir.path().join("small/summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "seed,top1,balanced_per_class_acc");
    assert!(rows[1].starts_with("2,") && rows[3].starts_with("4,"));
    assert!(rows[4].starts_with("mean,") && rows[5].starts_with("std,"));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    assert!(run(&["train", &cfg, "--seeds", "5"], dir.path())
        .status
        .success());
    let resolved = dir.path().join("small/seed-5/config.resolved.toml");
    let again = tempfile::tempdir().unwrap();
    assert!(run(&["train", resolved.to_str().unwrap()], again.path())
        .status
        .success());
    let a = fs::read(dir.path().join("small/seed-5/eval.json")).unwrap();
    let b = fs::read(again.path().join("small/seed-5/eval.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        &SMALL.replace("epochs = 3", "epochs = 3\nepohcs = 4"),
    );
    let out = run(&["train", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("epohcs"), "{}", stderr(&out));
}

#[test]
fn missing_config_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        run(&["train", missing.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn compare_refuses_confounded_configs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", SMALL);
    let b = write(
        dir.path(),
        "b.toml",
        &SMALL
            .replace("variant = \"ss-lr\"", "variant = \"lr\"")
            .replace("learning_rate = 1e-2", "learning_rate = 1e-3")
            .replace("run_name = \"small\"", "run_name = \"small-lr\""),
    );
    let out = run(&["compare", &a, &b, "--seeds", "1..5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("[optimizer]"), "{}", stderr(&out));
    assert!(
        !dir.path().join("small").exists(),
        "nothing should be trained"
    );
}

#[test]
fn compare_reports_paired_test() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", SMALL);
    let b = write(
        dir.path(),
        "b.toml",
        &SMALL
            .replace("variant = \"ss-lr\"", "variant = \"lr\"")
            .replace("run_name = \"small\"", "run_name = \"small-lr\""),
    );
    let out = run(&["compare", &b, &a, "--seeds", "1..6"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("metric: top1"));
    assert!(stdout.contains("wilcoxon"));
    let json: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("compare-small-lr-vs-small/compare.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["seeds"].as_array().unwrap().len(), 6);
    assert_eq!(json["a"]["loss"]["variant"], "lr");
}

#[test]
fn compare_with_too_few_seeds_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", SMALL);
    let b = write(
        dir.path(),
        "b.toml",
        &SMALL
            .replace("variant = \"ss-lr\"", "variant = \"sr\"")
            .replace("run_name = \"small\"", "run_name = \"small-sr\""),
    );
    let out = run(&["compare", &a, &b, "--seeds", "1..2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("insufficient data"));
}

#[test]
fn divergence_keeps_partial_trace_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("kind = \"adam\"", "kind = \"sgd\"")
        .replace("learning_rate = 1e-2", "learning_rate = 1e200");
    let cfg = write(dir.path(), "boom.toml", &text);
    let out = run(&["train", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let trace = fs::read_to_string(dir.path().join("small/seed-1/small-seed1.trace.csv")).unwrap();
    assert!(trace.lines().count() >= 2);
    assert!(!dir.path().join("small/seed-1/eval.json").exists());
}

#[test]
fn gen_data_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    assert!(run(&["train", &cfg, "--seeds", "7"], dir.path())
        .status
        .success());
    let data = dir.path().join("data");
    let out = run(
        &[
            "gen-data",
            &cfg,
            "--seed",
            "7",
            "--out",
            data.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(data.join("train.csv").is_file() && data.join("test.csv").is_file());

    let ckpt = dir.path().join("small/seed-7/checkpoint.json");
    let report = dir.path().join("report.json");
    let out = run(
        &[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            data.join("test.csv").to_str().unwrap(),
            "--task",
            "classify",
            "--out",
            report.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(
        fs::read(&report).unwrap(),
        fs::read(dir.path().join("small/seed-7/eval.json")).unwrap()
    );

    let out = run(
        &[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--data",
            data.join("test.csv").to_str().unwrap(),
            "--task",
            "multilabel",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_ignores_other_sections() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "retrieval.toml",
        "[data]\ngenerator = \"retrieval\"\ntrain_classes = 5\ntest_classes = 3\ndim = 4\nn_per_class = 4\nseparation = 2.0\n\n[whatever]\nanything = 1\n",
    );
    let out_dir = dir.path().join("out");
    let out = run(
        &["gen-data", &cfg, "--out", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["train.csv", "query.csv", "gallery.csv"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn grad_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "grad-check",
            "--variant",
            "hs-sr",
            "--k",
            "3,7",
            "--trials",
            "10",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 2);

    assert_eq!(
        run(&["grad-check", "--variant", "softmax"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(
            &["grad-check", "--variant", "lr", "--detach-weight"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&["grad-check", "--k", "1"], dir.path()).status.code(),
        Some(2)
    );
}
