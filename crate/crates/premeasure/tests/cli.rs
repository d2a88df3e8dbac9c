//! End-to-end checks of the command-line interface: subcommands, file
//! formats, exit codes, and on-disk determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_premeasure"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.toml"))
}

#[test]
fn precondition_then_metrics_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sample.csv");
    std::fs::write(&csv, "0.1\n0.2\n0.4\n0.5\n0.9\n").unwrap();

    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        r#"
name = "cli-precondition"
seed = 0
kind = "metrics"

[target]
kind = "uniform-box"
box_ = [[0.0, 1.0]]
resolution = [64]

[preconditioner]
kind = "kde"
kernel = "gaussian"

[preconditioner.bandwidth]
rule = "fixed"
h = 0.15
"#,
    )
    .unwrap();

    let out = dir.path().join("measure.json");
    let status = bin()
        .args(["precondition"])
        .arg(&csv)
        .args(["--spec"])
        .arg(&spec)
        .args(["--no-labels", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.exists());

    // Compare the smoothed measure with a uniform density via every mode.
    let uniform = dir.path().join("uniform.json");
    let m = premeasure::scenario::TargetSpec::UniformBox {
        box_: vec![(0.0, 1.0)],
        resolution: vec![64],
    }
    .build()
    .unwrap();
    std::fs::write(&uniform, m.to_json().unwrap()).unwrap();

    for mode in ["tv", "d2", "setwise", "mmd", "weak"] {
        let output = bin()
            .args(["metrics"])
            .arg(&out)
            .arg(&uniform)
            .args(["--mode", mode])
            .output()
            .unwrap();
        assert!(output.status.success(), "mode {mode}");
        let parsed: serde_json::Value =
            serde_json::from_slice(&output.stdout).expect("JSON line");
        assert_eq!(parsed["mode"], mode);
        assert!(parsed["value"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn experiment_run_writes_outputs_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["experiment", "run"])
        .arg(scenario("kde-tv-convergence"))
        .args(["--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.path().join("record.json").exists());
    assert!(dir.path().join("distance_trajectory.csv").exists());
    assert!(dir.path().join("distance_trajectory.svg").exists());

    // plot re-renders from the record.
    let plots = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["plot"])
        .arg(dir.path().join("record.json"))
        .args(["--out"])
        .arg(plots.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(plots.path().join("distance_trajectory.svg").exists());

    // A failing verdict exits 2.
    let failing = dir.path().join("failing.toml");
    let text = std::fs::read_to_string(scenario("kde-tv-convergence"))
        .unwrap()
        .replace("require_last_below = 0.05", "require_last_below = 1e-9");
    std::fs::write(&failing, text).unwrap();
    let status = bin()
        .args(["experiment", "run"])
        .arg(&failing)
        .args(["--out"])
        .arg(dir.path().join("failing-run"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // A missing file exits 1.
    let status = bin()
        .args(["experiment", "run", "no-such-scenario.toml"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn recovery_subcommand_rejects_other_kinds() {
    let status = bin()
        .args(["recovery"])
        .arg(scenario("kde-tv-convergence"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn adapt_runs_on_csv_domains() {
    use premeasure::scenario::{AdaptationSpec, ScenarioConfig};
    use premeasure::RandomSeed;

    let cfg = ScenarioConfig::load(&scenario("class-transfer")).unwrap();
    let Some(AdaptationSpec::ConditionalTransfer { source, shift, .. }) = &cfg.adaptation else {
        panic!("unexpected scenario shape");
    };
    let seed = RandomSeed(0);
    let src = source.draw(seed.child("source")).unwrap();
    let tgt = source.shifted(shift).unwrap().draw(seed.child("target")).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let src_csv = dir.path().join("source.csv");
    let tgt_csv = dir.path().join("target.csv");
    std::fs::write(&src_csv, premeasure::scenario::sample_to_csv(&src)).unwrap();
    std::fs::write(&tgt_csv, premeasure::scenario::sample_to_csv(&tgt)).unwrap();

    let adapt_cfg = dir.path().join("adapt.toml");
    std::fs::write(
        &adapt_cfg,
        r#"
min_accuracy = 0.85
max_gap = 0.5

[class]
param_box = [[-1.5, 1.5], [-12.0, 12.0]]
feature_box = [[-2.0, 8.0]]

[loss]
kind = "logistic"
"#,
    )
    .unwrap();

    let out_dir = dir.path().join("adapt-out");
    let output = bin()
        .args(["adapt"])
        .arg(&src_csv)
        .arg(&tgt_csv)
        .args(["--config"])
        .arg(&adapt_cfg)
        .args(["--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("adapted_loss"));
    assert!(out_dir.join("record.json").exists());
    assert!(out_dir.join("transfer.csv").exists());
}

#[test]
fn double_runs_produce_identical_files() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let status = bin()
            .args(["experiment", "run"])
            .arg(scenario("empirical-tv-singularity"))
            .args(["--out"])
            .arg(dir.path())
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = std::fs::read(dir_a.path().join("distance_trajectory.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("distance_trajectory.csv")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(dir_a.path().join("distance_trajectory.svg")).unwrap();
    let b = std::fs::read(dir_b.path().join("distance_trajectory.svg")).unwrap();
    assert_eq!(a, b);
}
