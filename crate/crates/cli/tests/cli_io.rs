//! End-to-end checks of the binary: artifact round trips, determinism of
//! the CSV outputs, and the error paths a user actually hits (missing
//! files, bad configs, unstable grids).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvregime"))
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Run to completion with captured output, asserting a zero exit.
fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().unwrap();
    assert!(
        output.status.success(),
        "command failed\nstdout:\n{}\nstderr:\n{}",
        stdout(&output),
        stderr(&output)
    );
    output
}

/// A small stable instance: fits the stability bound with a wide margin and
/// solves in milliseconds.
fn small_run_config(dir: &Path) -> PathBuf {
    let model = repo_config("two_regime_model.json");
    let text = format!(
        r#"{{
  "model": {:?},
  "grid": {{ "h1": 0.25, "h2": 0.005, "x_min": 0.0, "x_max": 2.0 }},
  "controls": {{ "min": -1.0, "max": 1.0, "count": 9 }},
  "solver": {{ "lambda": 0.2, "kappa": 1.0,
               "kappa_range": {{ "start": 1.1, "stop": 1.1, "step": 0.5 }} }},
  "simulation": {{ "x0": 1.0, "p0": [0.5, 0.5], "n_paths": 400, "seed": 11 }}
}}"#,
        model.display().to_string()
    );
    let path = dir.join("run.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_model_file_exits_nonzero_and_names_the_path() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["check", "--model", "no/such/model.json"])
        .args(["--grid-h1", "0.25", "--grid-h2", "0.005"])
        .args(["--x-min", "0", "--x-max", "2"])
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(
        stderr(&output).contains("no/such/model.json"),
        "error must name the missing path: {}",
        stderr(&output)
    );
}

#[test]
fn validation_lists_every_violation_in_one_message() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["solve", "--model"])
        .arg(repo_config("two_regime_model.json"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = stderr(&output);
    for field in ["grid.h1", "grid.h2", "controls.min", "solver.lambda", "solver.kappa"] {
        assert!(err.contains(field), "missing {field} in: {err}");
    }
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{ "grdi": { "h1": 0.25 } }"#).unwrap();
    let output = bin()
        .arg("check")
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(
        stderr(&output).contains("grdi"),
        "typo should be named: {}",
        stderr(&output)
    );
}

#[test]
fn check_fails_a_coarse_grid_and_reports_the_coefficient() {
    // The scan needs controls, which have no dedicated flag, so the coarse
    // grid arrives through a config file.
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("coarse.json");
    std::fs::write(
        &config,
        format!(
            r#"{{ "model": {:?},
                 "grid": {{ "h1": 0.25, "h2": 0.01, "x_min": 0.0, "x_max": 6.0 }},
                 "controls": {{ "min": -2.0, "max": 2.0, "count": 41 }} }}"#,
            repo_config("two_regime_model.json").display().to_string()
        ),
    )
    .unwrap();
    let out = dir.path().join("check");
    let output = bin()
        .arg("check")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!output.status.success(), "coarse grid must fail the check");
    let text = stdout(&output);
    assert!(text.contains("FAIL"), "stdout: {text}");
    assert!(text.contains("max coefficient"), "stdout: {text}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cfl_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["cfl"]["pass"], serde_json::Value::Bool(false));
    assert!(report["cfl"]["max_x_coefficient"].as_f64().unwrap() > 1.0);
}

#[test]
fn solve_simulate_roundtrip_produces_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_run_config(dir.path());
    let solve_out = dir.path().join("solve");
    run_ok(bin()
        .arg("solve")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&solve_out));
    assert!(solve_out.join("value_policy.csv").exists());
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(solve_out.join("solve_summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["lambda"].as_f64().unwrap(), 0.2);
    assert_eq!(summary["kappa"].as_f64().unwrap(), 1.0);
    assert_eq!(summary["cfl_pass"], serde_json::Value::Bool(true));

    let sim_out = dir.path().join("sim");
    let output = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--policy")
        .arg(solve_out.join("solve_summary.json"))
        .args(["--sample-paths", "2"])
        .arg("--out")
        .arg(&sim_out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sim_out.join("mc_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["report"]["n_paths"].as_u64().unwrap(), 400);
    assert_eq!(report["report"]["lambda"].as_f64().unwrap(), 0.2);
    let sample = std::fs::read_to_string(sim_out.join("sample_paths.csv")).unwrap();
    assert!(sample.starts_with("path,t,x,regime,p_1,p_2,u_1"));
    // Two paths, each n_steps + 1 = 121 layers, plus the header.
    assert_eq!(sample.lines().count(), 1 + 2 * 121);
}

#[test]
fn rerunning_with_the_same_seed_reproduces_every_csv_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_run_config(dir.path());
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        run_ok(bin()
            .arg("solve")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out));
        run_ok(bin()
            .arg("frontier")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out));
        run_ok(bin()
            .arg("simulate")
            .arg("--config")
            .arg(&config)
            .arg("--policy")
            .arg(out.join("solve_summary.json"))
            .args(["--sample-paths", "3"])
            .arg("--out")
            .arg(&out));
        csvs.push((
            std::fs::read(out.join("value_policy.csv")).unwrap(),
            std::fs::read(out.join("frontier.csv")).unwrap(),
            std::fs::read(out.join("sample_paths.csv")).unwrap(),
        ));
    }
    assert_eq!(csvs[0].0, csvs[1].0, "value/policy CSV differs between runs");
    assert_eq!(csvs[0].1, csvs[1].1, "frontier CSV differs between runs");
    assert_eq!(csvs[0].2, csvs[1].2, "sample paths CSV differs between runs");
}

#[test]
fn force_overrides_the_stability_gate_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("coarse.json");
    std::fs::write(
        &config,
        format!(
            r#"{{ "model": {:?},
                 "grid": {{ "h1": 0.25, "h2": 0.01, "x_min": 0.0, "x_max": 6.0 }},
                 "controls": {{ "min": -2.0, "max": 2.0, "count": 41 }},
                 "solver": {{ "lambda": 0.2, "kappa": 1.0 }} }}"#,
            repo_config("two_regime_model.json").display().to_string()
        ),
    )
    .unwrap();
    let out = dir.path().join("gated");
    let gated = bin()
        .arg("solve")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!gated.status.success());
    assert!(
        stderr(&gated).contains("stability"),
        "gate should explain itself: {}",
        stderr(&gated)
    );

    let forced = bin()
        .arg("solve")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--force")
        .output()
        .unwrap();
    assert!(forced.status.success(), "{}", stderr(&forced));
    assert!(
        stderr(&forced).contains("warning"),
        "forcing must still warn: {}",
        stderr(&forced)
    );
    assert!(out.join("value_policy.csv").exists());
}

#[test]
fn bundled_model_file_matches_the_built_in_preset() {
    let loaded = mvregime::model::RegimeModel::load(repo_config("two_regime_model.json")).unwrap();
    assert_eq!(loaded, mvregime::model::presets::two_regime_market());
    assert_eq!(
        loaded.digest(),
        mvregime::model::presets::two_regime_market().digest()
    );
}
