//! End-to-end CLI contract: exit codes, artifact sets, and the config
//! schema export.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fhr-twin")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("fhr_twin_cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_subcommand_exits_with_usage_code() {
    let out = Command::new(bin()).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_fails_with_machine_readable_error() {
    let out = Command::new(bin())
        .args(["run", "definitely-missing.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).expect("JSON on stderr");
    assert!(parsed["error"].as_str().unwrap().contains("definitely-missing.toml"));
}

#[test]
fn config_schema_export_writes_json() {
    let dir = tmp("schema");
    let path = dir.join("schema.json");
    let out = Command::new(bin())
        .args(["run", "unused.toml", "--emit-config-schema"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(schema["title"], "ScenarioConfig");
}

fn assert_files(dir: &Path, names: &[&str]) {
    for n in names {
        let p = dir.join(n);
        assert!(p.exists(), "missing artifact {}", p.display());
        assert!(p.metadata().unwrap().len() > 0, "empty artifact {}", p.display());
    }
}

/// `demo shock --seed 7` completes and writes the full artifact set.
#[test]
fn demo_shock_writes_artifact_set() {
    let dir = tmp("demo-shock");
    let out = Command::new(bin())
        .args(["demo", "shock", "--seed", "7", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run_dir = dir.join("shock");
    assert_files(
        &run_dir,
        &[
            "truth.csv",
            "virtual.csv",
            "targets.csv",
            "health_truth.csv",
            "health_virtual.csv",
            "governor.csv",
            "assimilation.csv",
            "events.json",
            "plans.json",
            "power_health.svg",
            "error_variance.svg",
            "parameters.svg",
            "sensitivity_study.json",
            "surrogate_checkpoint.json",
        ],
    );
    // Emitted truth CSV parses back.
    let states = fhr_twin::runtime::read_state_csv(&run_dir.join("truth.csv")).unwrap();
    assert!(states.len() > 1000);
}

/// Scenario configs load from TOML; the checkpoint written by one run can
/// seed a sensitivity study and a compression.
#[test]
fn run_sobol_and_compress_pipeline() {
    let dir = tmp("pipeline");
    // A fast scenario config.
    let config_path = dir.join("scenario.toml");
    std::fs::write(
        &config_path,
        r#"
name = "pipeline"
duration_hours = 2.0
seed = 5
start_frac = 0.9

[demand]
kind = "hourly"
fracs = [0.9, 0.8]
"#,
    )
    .unwrap();
    let out = Command::new(bin())
        .args(["run"])
        .arg(&config_path)
        .args(["--out"])
        .arg(&dir)
        .args(["--format", "csv,json"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ck = dir.join("pipeline").join("surrogate_checkpoint.json");
    assert!(ck.exists());

    // Sensitivity study from the checkpoint.
    let study_path = dir.join("study.toml");
    std::fs::write(
        &study_path,
        format!(
            "checkpoint = {:?}\nn = 256\nthreshold = 0.10\noutputs = [\"q_dot_rx\"]\n",
            ck.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = Command::new(bin())
        .args(["sobol"])
        .arg(&study_path)
        .args(["--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_files(&dir.join("sobol"), &["study.json", "study.csv", "study.svg", "selection.json"]);

    // Compression from the same checkpoint.
    let out = Command::new(bin())
        .args(["compress"])
        .arg(&ck)
        .args(["--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_files(
        &dir.join("compress"),
        &["hourly_model.json", "compression_report.json"],
    );
}

/// fit-surrogate consumes the CSVs a run emits.
#[test]
fn fit_surrogate_from_emitted_csvs() {
    let dir = tmp("fit");
    let out = Command::new(bin())
        .args(["fit-surrogate", "--synthesize", "12", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_files(&dir.join("fit"), &["surrogate_checkpoint.json", "fit_report.json"]);
}
