//! `solve`: one backward solve at a fixed multiplier and mean target,
//! emitting the value/policy surface as CSV plus a summary document that
//! `simulate` can later reconstruct the policy from.

use anyhow::{Context, Result};
use mvregime::chain::check_cfl;
use mvregime::model::SolverConfig;
use mvregime::solver::{solve, solve_unchecked, write_value_policy_csv};

use crate::artifacts::{atomic_write, atomic_write_json, Provenance, SolveSummary};
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
    if config.solver.lambda.is_none() {
        errors.push("solver.lambda missing (--lambda)".into());
    }
    if config.solver.kappa.is_none() {
        errors.push("solver.kappa missing (--kappa)".into());
    }
    reject_if_invalid(errors)?;

    let grid = config.grid_spec(&model)?;
    let control_set = config.control_set(model.d)?;
    let solver_config = SolverConfig {
        lambda: config.solver.lambda.expect("validated"),
        kappa: config.solver.kappa.expect("validated"),
        control_set,
    };

    let (result, cfl) = if force {
        let report = check_cfl(&model, &grid, &solver_config.control_set)?;
        if !report.pass {
            eprintln!(
                "warning: stability scan failed (max coefficient {:.6} > 1); \
                 proceeding anyway because --force was given — treat the surfaces as suspect",
                report.max_x_coefficient
            );
        }
        (solve_unchecked(&model, &grid, &solver_config)?, report)
    } else {
        let result = solve(&model, &grid, &solver_config)?;
        let report = result.cfl.clone().expect("gated solve carries its scan");
        (result, report)
    };

    let mut csv = Vec::new();
    write_value_policy_csv(&mut csv, &result.value, &result.policy)?;
    let out_dir = config.out_dir();
    let csv_name = "value_policy.csv";
    atomic_write(&out_dir.join(csv_name), &csv)?;

    let start_value = result
        .value
        .at_start(config.x0(), &config.p0(model.m))
        .context("evaluating the start node")?;
    let summary = SolveSummary {
        provenance: Provenance::now(config.content_hash("solve")),
        model_path: config
            .model
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        model_digest: model.digest(),
        grid: grid.clone(),
        lambda: solver_config.lambda,
        kappa: solver_config.kappa,
        control_set: solver_config.control_set.clone(),
        csv: csv_name.to_string(),
        start_value,
        min_value: result.value.min_value(),
        diagnostics: result.diagnostics,
        cfl_pass: cfl.pass,
        max_x_coefficient: cfl.max_x_coefficient,
    };
    let summary_path = out_dir.join("solve_summary.json");
    atomic_write_json(&summary_path, &summary)?;

    println!(
        "solved {} layers x {} nodes: V(s, x0, p0) = {:.6}, min V = {:.6} (bound {:.6})",
        grid.n_steps,
        grid.n_p_nodes() * grid.nx,
        start_value,
        summary.min_value,
        -solver_config.lambda * solver_config.lambda
    );
    println!(
        "policy written to {}, summary to {}",
        out_dir.join(csv_name).display(),
        summary_path.display()
    );
    Ok(())
}
