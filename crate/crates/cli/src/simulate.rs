//! `simulate`: reconstruct a solved policy from its summary document, run
//! the closed-loop Monte Carlo against the true (unfiltered) dynamics, and
//! write the report — optionally with the first few trajectories as CSV.

use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use mvregime::simulate::{mc_estimate, sample_paths, SimConfig, SimPath};
use mvregime::solver::read_policy_csv;

use crate::artifacts::{atomic_write, atomic_write_json, Provenance, SimulateSummary, SolveSummary};
use crate::config::{reject_if_invalid, RunConfig};

/// Several paths in one CSV, keyed by a leading `path` column.
fn paths_csv(paths: &[SimPath]) -> String {
    let m = paths
        .first()
        .and_then(|p| p.p.first())
        .map_or(0, Vec::len);
    let d = paths
        .first()
        .and_then(|p| p.controls.first())
        .map_or(0, Vec::len);
    let mut out = String::from("path,t,x,regime");
    for i in 1..=m {
        out.push_str(&format!(",p_{i}"));
    }
    for l in 1..=d {
        out.push_str(&format!(",u_{l}"));
    }
    out.push('\n');
    for (index, path) in paths.iter().enumerate() {
        for k in 0..path.t.len() {
            out.push_str(&format!(
                "{index},{},{},{}",
                path.t[k], path.x[k], path.regime[k]
            ));
            for &pi in &path.p[k] {
                out.push_str(&format!(",{pi}"));
            }
            if k < path.controls.len() {
                for &ul in &path.controls[k] {
                    out.push_str(&format!(",{ul}"));
                }
            } else {
                for _ in 0..d {
                    out.push(',');
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn run(config: &RunConfig, policy_path: &Path, sample: Option<usize>) -> Result<()> {
    let mut errors = Vec::new();
    let model = match config.load_model() {
        Ok(model) => model,
        Err(err) => {
            errors.push(format!("{err:#}"));
            reject_if_invalid(errors)?;
            unreachable!("model error was pushed");
        }
    };
    config.simulation_violations(model.m, &mut errors);
    if !policy_path.exists() {
        errors.push(format!("policy summary not found: {}", policy_path.display()));
    }
    reject_if_invalid(errors)?;

    let summary = SolveSummary::load(policy_path)?;
    if summary.model_digest != model.digest() {
        anyhow::bail!(
            "the policy at {} was solved for a different model (digest {} vs {})",
            policy_path.display(),
            summary.model_digest,
            model.digest()
        );
    }
    let csv_path = summary.csv_path(policy_path);
    let file = std::fs::File::open(&csv_path)
        .with_context(|| format!("cannot open policy CSV {}", csv_path.display()))?;
    let policy = read_policy_csv(
        BufReader::new(file),
        summary.grid.clone(),
        summary.control_set.clone(),
        summary.lambda,
        summary.kappa,
        summary.model_digest.clone(),
    )?;

    let sim_config = SimConfig {
        x0: config.x0(),
        p0: config.p0(model.m),
        n_paths: config.n_paths(),
        seed: config.seed(),
    };
    let report = mc_estimate(&model, &policy, &sim_config)?;

    let out_dir = config.out_dir();
    let doc = SimulateSummary {
        provenance: Provenance::now(config.content_hash("simulate")),
        model_path: config
            .model
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        model_digest: summary.model_digest.clone(),
        policy_summary: policy_path.display().to_string(),
        x0: sim_config.x0,
        p0: sim_config.p0.clone(),
        report: report.clone(),
    };
    let report_path = out_dir.join("mc_report.json");
    atomic_write_json(&report_path, &doc)?;

    println!(
        "{} paths: mean {:.6} (target {:.6}, residual {:.6}), std dev {:.6}",
        report.n_paths, report.mean, report.kappa, report.constraint_residual, report.std_dev
    );
    if report.clipping_warning {
        eprintln!(
            "warning: {:.2}% of paths were clipped at the wealth box edge; \
             the box, not the market, is shaping these statistics",
            100.0 * report.clipped_fraction
        );
    }
    println!("report written to {}", report_path.display());

    if let Some(n) = sample {
        let paths = sample_paths(&model, &policy, &sim_config, n)?;
        let sample_path = out_dir.join("sample_paths.csv");
        atomic_write(&sample_path, paths_csv(&paths).as_bytes())?;
        println!("{} sample paths written to {}", paths.len(), sample_path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_csv_keys_rows_by_path_index() {
        let path = SimPath {
            t: vec![0.0, 0.5],
            x: vec![1.0, 1.1],
            regime: vec![0, 0],
            p: vec![vec![0.6, 0.4], vec![0.7, 0.3]],
            controls: vec![vec![0.25]],
            clipped: false,
        };
        let text = paths_csv(&[path.clone(), path]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path,t,x,regime,p_1,p_2,u_1");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,0,1,0,"));
        assert!(lines[3].starts_with("1,0,1,0,"));
        assert!(lines[2].ends_with(','), "terminal row has no control");
    }
}
