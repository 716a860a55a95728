//! `check`: run the exhaustive stability scan and a local-consistency probe
//! on the configured grid, write both as one JSON report, and exit nonzero
//! when the grid is unusable.

use std::path::Path;

use anyhow::Result;
use mvregime::chain::{check_cfl, local_consistency_stats, CflReport, GridSpec};
use mvregime::model::{ControlSet, RegimeModel};
use serde::Serialize;

use crate::artifacts::{atomic_write_json, Provenance};
use crate::config::{reject_if_invalid, RunConfig};

/// Probe of the one-step moments on a deterministic sub-lattice of
/// (layer, node, control) combinations.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConsistencyProbe {
    pub samples: usize,
    /// Worst `|mean - b h2|`; zero up to rounding by construction.
    pub max_mean_error: f64,
    /// Worst `|variance - a h2|`.
    pub max_variance_error: f64,
    /// The scheme's own bound `h1 h2 max|b| + (h2 max|b|)^2`.
    pub variance_error_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
struct CheckDoc<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    model_path: String,
    model_digest: String,
    grid: &'a GridSpec,
    n_controls: usize,
    cfl: &'a CflReport,
    consistency: &'a ConsistencyProbe,
}

/// Walk a deterministic sub-lattice (about eight slices per axis) and
/// compare the chain's one-step moments against their analytic targets.
pub fn probe_consistency(
    model: &RegimeModel,
    grid: &GridSpec,
    controls: &ControlSet,
) -> Result<ConsistencyProbe> {
    let stride = |len: usize| (len / 8).max(1);
    let p_vectors = grid.p_vectors();
    let mut samples = 0usize;
    let mut max_mean_error = 0.0f64;
    let mut max_variance_error = 0.0f64;
    let mut max_abs_b = 0.0f64;
    for layer in (0..grid.n_steps).step_by(stride(grid.n_steps)) {
        let t = grid.t_at(layer);
        for p in p_vectors.iter().step_by(stride(p_vectors.len())) {
            for ix in (0..grid.nx).step_by(stride(grid.nx)) {
                let x = grid.x_at(ix);
                for u in controls.iter().step_by(stride(controls.len())) {
                    let stats = local_consistency_stats(model, grid, t, x, p, u)?;
                    samples += 1;
                    max_mean_error = max_mean_error.max((stats.mean - stats.target_mean).abs());
                    max_variance_error =
                        max_variance_error.max((stats.variance - stats.target_variance).abs());
                    max_abs_b = max_abs_b.max((stats.target_mean / grid.h2).abs());
                }
            }
        }
    }
    let variance_error_bound =
        grid.h1 * grid.h2 * max_abs_b + (grid.h2 * max_abs_b) * (grid.h2 * max_abs_b);
    Ok(ConsistencyProbe {
        samples,
        max_mean_error,
        max_variance_error,
        variance_error_bound,
        pass: max_mean_error <= 1e-13 && max_variance_error <= variance_error_bound,
    })
}

/// Returns the process exit code: 0 when both the scan and the probe pass.
pub fn run(config: &RunConfig) -> Result<i32> {
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
    reject_if_invalid(errors)?;

    let grid = config.grid_spec(&model)?;
    let controls = config.control_set(model.d)?;
    let cfl = check_cfl(&model, &grid, &controls)?;
    let consistency = probe_consistency(&model, &grid, &controls)?;

    let provenance = Provenance::now(config.content_hash("check"));
    let doc = CheckDoc {
        provenance: &provenance,
        model_path: config
            .model
            .as_deref()
            .unwrap_or(Path::new(""))
            .display()
            .to_string(),
        model_digest: model.digest(),
        grid: &grid,
        n_controls: controls.len(),
        cfl: &cfl,
        consistency: &consistency,
    };
    let out = config.out_dir().join("cfl_report.json");
    atomic_write_json(&out, &doc)?;

    if cfl.pass {
        println!(
            "stability scan PASS: max coefficient {:.6} (of 1) over {} layers, {} nodes, {} controls",
            cfl.max_x_coefficient,
            grid.n_steps,
            grid.n_p_nodes() * grid.nx,
            controls.len()
        );
    } else {
        println!(
            "stability scan FAIL: max coefficient {:.6} > 1 at layer {}, x index {}, p index {} ({} violations); refine h2 or coarsen h1",
            cfl.max_x_coefficient,
            cfl.argmax.layer,
            cfl.argmax.x_index,
            cfl.argmax.p_index,
            cfl.n_violations
        );
    }
    println!(
        "local consistency {}: {} samples, mean error {:.3e}, variance error {:.3e} (bound {:.3e})",
        if consistency.pass { "PASS" } else { "FAIL" },
        consistency.samples,
        consistency.max_mean_error,
        consistency.max_variance_error,
        consistency.variance_error_bound
    );
    println!("report written to {}", out.display());
    Ok(if cfl.pass && consistency.pass { 0 } else { 1 })
}
