//! `frontier`: sweep the mean target over a range, solving the multiplier
//! search and validating each point by closed-loop Monte Carlo. The CSV
//! leads with the frontier's own axes (kappa, std_dev); the summary JSON
//! carries every point in full plus any targets that failed.

use anyhow::Result;
use mvregime::chain::check_cfl;
use mvregime::solver::{efficient_frontier, optimize_lambda_unchecked, FrontierConfig};

use crate::artifacts::{
    atomic_write, atomic_write_json, frontier_csv, FrontierFailure, FrontierSummary, Provenance,
};
use crate::config::{reject_if_invalid, RunConfig};

pub fn run(config: &RunConfig, force: bool) -> Result<()> {
    let mut errors = Vec::new();
    config.grid_violations(&mut errors);
    let model = match config.load_model() {
        Ok(model) => model,
        Err(err) => {
            errors.push(format!("{err:#}"));
            reject_if_invalid(errors)?;
            unreachable!("model error was pushed");
        }
    };
    config.control_violations(model.d, &mut errors);
    config.simulation_violations(model.m, &mut errors);
    match &config.solver.kappa_range {
        None => errors.push("solver.kappa_range missing (--kappa-range START STOP STEP)".into()),
        Some(range) => {
            if !(range.step > 0.0) {
                errors.push(format!("kappa_range.step = {} must be positive", range.step));
            }
            if !(range.start <= range.stop) {
                errors.push(format!(
                    "kappa_range [{}, {}] is empty",
                    range.start, range.stop
                ));
            }
        }
    }
    reject_if_invalid(errors)?;

    let grid = config.grid_spec(&model)?;
    let frontier_config = FrontierConfig {
        control_set: config.control_set(model.d)?,
        x0: config.x0(),
        p0: config.p0(model.m),
        search: config.lambda_search(),
        n_paths: config.n_paths(),
        seed: config.seed(),
    };
    let kappas = config.solver.kappa_range.expect("validated").values();

    let sweep = if force {
        // One scan up front; a failure is reported but not fatal here.
        let report = check_cfl(&model, &grid, &frontier_config.control_set)?;
        if !report.pass {
            eprintln!(
                "warning: stability scan failed (max coefficient {:.6} > 1); \
                 proceeding anyway because --force was given — treat the frontier as suspect",
                report.max_x_coefficient
            );
        }
        let mut points = Vec::new();
        let mut failures = Vec::new();
        for &kappa in &kappas {
            match optimize_lambda_unchecked(&model, &grid, &frontier_config, kappa) {
                Ok(outcome) => points.push(outcome.point),
                Err(err) => failures.push((kappa, err.to_string())),
            }
        }
        mvregime::solver::FrontierSweep { points, failures }
    } else {
        efficient_frontier(&model, &grid, &frontier_config, &kappas)
    };

    let out_dir = config.out_dir();
    let csv_path = out_dir.join("frontier.csv");
    atomic_write(&csv_path, frontier_csv(&sweep.points).as_bytes())?;
    let summary = FrontierSummary {
        provenance: Provenance::now(config.content_hash("frontier")),
        model_path: config
            .model
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        model_digest: model.digest(),
        grid,
        control_set: frontier_config.control_set.clone(),
        x0: frontier_config.x0,
        p0: frontier_config.p0.clone(),
        n_paths: frontier_config.n_paths,
        seed: frontier_config.seed,
        lambda_bracket: [
            frontier_config.search.bracket.0,
            frontier_config.search.bracket.1,
        ],
        points: sweep.points.clone(),
        failures: sweep
            .failures
            .iter()
            .map(|(kappa, error)| FrontierFailure {
                kappa: *kappa,
                error: error.clone(),
            })
            .collect(),
    };
    let summary_path = out_dir.join("frontier_summary.json");
    atomic_write_json(&summary_path, &summary)?;

    for p in &sweep.points {
        println!(
            "kappa {:.2}: lambda* {:+.4}, std dev {:.4}, mc mean {:.4} (residual {:.4})",
            p.kappa, p.lambda_star, p.std_dev, p.mc_mean, p.residual
        );
    }
    println!(
        "{} of {} targets solved; frontier written to {}, summary to {}",
        sweep.points.len(),
        kappas.len(),
        csv_path.display(),
        summary_path.display()
    );
    if !sweep.failures.is_empty() {
        let lines: Vec<String> = sweep
            .failures
            .iter()
            .map(|(kappa, error)| format!("kappa {kappa}: {error}"))
            .collect();
        anyhow::bail!("{} targets failed:\n  - {}", lines.len(), lines.join("\n  - "));
    }
    Ok(())
}
