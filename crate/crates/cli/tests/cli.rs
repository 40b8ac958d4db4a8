use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
data = "data"
models = "models"
out = "out"

[synth]
sequences = 2

[synth.video]
frames = 3
height = 48
width = 48
axes = [8.0, 6.0]

[cascade_train]
n_trees = 4
depth = 2
"#;

fn gvcod(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvcod"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("launch gvcod")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gvcod(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    ok(dir.path(), &["synth", "--config", "run.toml"]);
    dir
}

#[test]
fn account_prints_published_totals() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["account", "--paper-scale"]);
    assert!(text.contains("19,902,216"));
    assert!(text.contains("17,426,582,880"));
}

#[test]
fn predict_writes_one_map_per_frame() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["train-cascade", "--config", "run.toml"]);
    ok(d, &["predict", "--config", "run.toml"]);
    for seq in ["seq_000", "seq_001"] {
        let maps = fs::read_dir(d.join("out").join(seq).join("stage1"))
            .unwrap()
            .count();
        assert_eq!(maps, 3, "{seq}");
    }
}

#[test]
fn ground_truth_scores_perfectly() {
    let dir = setup();
    let text = ok(
        dir.path(),
        &[
            "evaluate",
            "--config",
            "run.toml",
            "--pred",
            "data",
            "--pred-subdir",
            "gt",
        ],
    );
    let overall = text.lines().find(|l| l.starts_with("overall")).unwrap();
    let cols: Vec<f64> = overall
        .split_whitespace()
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(cols, vec![1.0, 1.0, 0.0, 1.0, 1.0]);
}

#[test]
fn failure_reports_code_and_removes_partial_outputs() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["train-cascade", "--config", "run.toml"]);
    fs::write(d.join("data/seq_001/frames/00001.png"), b"not a png").unwrap();
    let out = gvcod(d, &["predict", "--config", "run.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: "), "{err}");
    assert!(
        err.split(':')
            .nth(1)
            .is_some_and(|code| !code.trim().is_empty()),
        "{err}"
    );
    assert!(!d.join("out").exists());
}

#[test]
fn bad_arguments_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = gvcod(dir.path(), &["refine", "--term", "medium"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: usage:"));
}
