//! Backward value iteration and the mean-constrained frontier.
//!
//! The mean-variance problem is embedded in an unconstrained family indexed
//! by a multiplier `lambda`: minimize `E[(x(T) + lambda - kappa)^2] -
//! lambda^2` over admissible controls. On the approximating chain this is a
//! finite-horizon Markov decision problem solved by the explicit backward
//! recursion
//!
//! ```text
//! V_n(x, p) = min_u { stay V_{n+1}(x, p) + up V_{n+1}(x + h1, p)
//!                     + down V_{n+1}(x - h1, p)
//!                     + sum_i [ up_i V_{n+1}(x, p + h1 e_i)
//!                             + down_i V_{n+1}(x, p - h1 e_i)
//!                             + diag_i V_{n+1}(x, p) ] }
//! ```
//!
//! with terminal data `(x + lambda - kappa)^2 - lambda^2`. Ties in the argmin
//! go to the lexicographically smallest control. Outward wealth moves at the
//! grid edge reflect into `stay` (counted as boundary hits); probability
//! excursions off an axis fold into the diagonal.
//!
//! For fixed `kappa` the dual function `d(lambda) = V_lambda(s, x0, p0)` is a
//! minimum of affine functions of `lambda`, hence concave; its maximizer
//! `lambda*` recovers the variance-minimal policy whose terminal mean is
//! pinned at `kappa`. [`optimize_lambda`] finds `lambda*` by golden-section
//! search (or one-dimensional Nelder–Mead behind a switch), then validates
//! the extracted policy by closed-loop Monte Carlo under the true dynamics.
//! [`efficient_frontier`] repeats this over a list of targets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{self, CflReport, GridSpec, PTriple};
use crate::error::{Error, Result};
use crate::model::{ControlSet, RegimeModel, SolverConfig};
use crate::simulate::{self, McReport};

/// Value surface `V[n][node]` with the configuration it was computed under.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub lambda: f64,
    pub kappa: f64,
    pub grid: GridSpec,
    pub model_digest: String,
    /// One layer per time index `0..=n_steps`; node `(ix, ip)` sits at
    /// `ip * nx + ix`.
    layers: Vec<Vec<f64>>,
}

impl ValueGrid {
    pub fn layer(&self, n: usize) -> &[f64] {
        &self.layers[n]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn at(&self, n: usize, ix: usize, ip: usize) -> f64 {
        self.layers[n][ip * self.grid.nx + ix]
    }

    /// Value at `t = s` for the initial point, rounded to the nearest node.
    pub fn at_start(&self, x0: f64, p0: &[f64]) -> Result<f64> {
        let ix = self.grid.nearest_x_index(x0);
        let ip = self.grid.nearest_p_index(p0)?;
        Ok(self.at(0, ix, ip))
    }

    /// Smallest value anywhere on the surface.
    pub fn min_value(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|layer| layer.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Minimizing control index per node and layer, `0..n_steps` (no policy at
/// the terminal layer).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid {
    pub lambda: f64,
    pub kappa: f64,
    pub grid: GridSpec,
    pub control_set: ControlSet,
    pub model_digest: String,
    layers: Vec<Vec<u32>>,
}

impl PolicyGrid {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn control_index(&self, n: usize, ix: usize, ip: usize) -> usize {
        self.layers[n][ip * self.grid.nx + ix] as usize
    }

    #[inline]
    pub fn control(&self, n: usize, ix: usize, ip: usize) -> &[f64] {
        self.control_set.point(self.control_index(n, ix, ip))
    }

    /// Policy that plays the same control everywhere; used for baselines
    /// (e.g. the uncontrolled terminal mean).
    pub fn constant(
        grid: GridSpec,
        control: Vec<f64>,
        lambda: f64,
        kappa: f64,
        model_digest: String,
    ) -> Result<Self> {
        let control_set = ControlSet::from_points(vec![control])?;
        let nodes = grid.n_p_nodes() * grid.nx;
        let layers = vec![vec![0u32; nodes]; grid.n_steps];
        Ok(Self {
            lambda,
            kappa,
            grid,
            control_set,
            model_digest,
            layers,
        })
    }

    /// Rebuild a policy from raw per-layer control indices (CSV reload).
    pub fn from_layers(
        grid: GridSpec,
        control_set: ControlSet,
        lambda: f64,
        kappa: f64,
        model_digest: String,
        layers: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let nodes = grid.n_p_nodes() * grid.nx;
        if layers.len() != grid.n_steps {
            return Err(Error::Dimension {
                context: "policy layers",
                expected: grid.n_steps,
                got: layers.len(),
            });
        }
        for layer in &layers {
            if layer.len() != nodes {
                return Err(Error::Dimension {
                    context: "policy layer nodes",
                    expected: nodes,
                    got: layer.len(),
                });
            }
            if let Some(&bad) = layer.iter().find(|&&iu| iu as usize >= control_set.len()) {
                return Err(Error::Dimension {
                    context: "policy control index",
                    expected: control_set.len(),
                    got: bad as usize,
                });
            }
        }
        Ok(Self {
            lambda,
            kappa,
            grid,
            control_set,
            model_digest,
            layers,
        })
    }
}

/// Terminal data `(x + lambda - kappa)^2 - lambda^2` on every node of the
/// final layer (constant across `p`).
pub fn terminal_values(grid: &GridSpec, lambda: f64, kappa: f64) -> Vec<f64> {
    let np = grid.n_p_nodes();
    let mut layer = vec![0.0; np * grid.nx];
    for ix in 0..grid.nx {
        let shifted = grid.x_at(ix) + lambda - kappa;
        let value = shifted * shifted - lambda * lambda;
        for ip in 0..np {
            layer[ip * grid.nx + ix] = value;
        }
    }
    layer
}

/// Precomputed per-p-node data that the sweep reuses across layers: the
/// decoded probability vector and the clamped transition triples of the
/// active coordinates together with their neighbor node indices.
struct SweepContext {
    p_vectors: Vec<Vec<f64>>,
    /// Per p-node: `(triple, ip_up, ip_down)`. Clamped weights are zero, so
    /// the matching neighbor index is never dereferenced.
    p_moves: Vec<Vec<(PTriple, usize, usize)>>,
}

impl SweepContext {
    fn new(model: &RegimeModel, grid: &GridSpec) -> Result<Self> {
        let p_vectors = grid.p_vectors();
        let active = grid.active_coordinates();
        let axis_len = grid.p_axis_len;
        let mut p_moves = Vec::with_capacity(p_vectors.len());
        for (ip, p) in p_vectors.iter().enumerate() {
            let triples = chain::p_transition_terms(model, grid, p)?;
            let digits = grid.p_digits(ip);
            let mut moves = Vec::with_capacity(active.len());
            for (slot, &coord) in active.iter().enumerate() {
                let digit = digits[slot];
                let clamped = triples[coord].clamped(digit, axis_len);
                // Stride of one step along this axis in the flattened index.
                let stride = axis_len.pow((active.len() - 1 - slot) as u32);
                let ip_up = if digit + 1 < axis_len { ip + stride } else { ip };
                let ip_down = if digit > 0 { ip - stride } else { ip };
                moves.push((clamped, ip_up, ip_down));
            }
            p_moves.push(moves);
        }
        Ok(Self { p_vectors, p_moves })
    }
}

/// Diagnostics accumulated over a sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepDiagnostics {
    /// Nodes whose chosen control had outward wealth mass reflected at the
    /// grid edge.
    pub boundary_hits: usize,
    /// Largest reflected probability mass among those hits.
    pub max_reflected_mass: f64,
    /// Smallest value seen anywhere (terminal layer included).
    pub min_value: f64,
}

/// One backward step: from the values at layer `n + 1` to values and policy
/// at layer `n`.
pub fn backward_step(
    model: &RegimeModel,
    grid: &GridSpec,
    config: &SolverConfig,
    v_next: &[f64],
    n: usize,
) -> Result<(Vec<f64>, Vec<u32>)> {
    let ctx = SweepContext::new(model, grid)?;
    let mut diag = SweepDiagnostics {
        boundary_hits: 0,
        max_reflected_mass: 0.0,
        min_value: f64::INFINITY,
    };
    step_layer(model, grid, config, &ctx, v_next, n, &mut diag)
}

fn step_layer(
    model: &RegimeModel,
    grid: &GridSpec,
    config: &SolverConfig,
    ctx: &SweepContext,
    v_next: &[f64],
    n: usize,
    diag: &mut SweepDiagnostics,
) -> Result<(Vec<f64>, Vec<u32>)> {
    let nx = grid.nx;
    let np = ctx.p_vectors.len();
    let nu = config.control_set.len();
    let d = model.d;
    let t = grid.t_at(n);

    let mut values = vec![0.0; np * nx];
    let mut policy = vec![0u32; np * nx];
    let mut bu = vec![0.0; nu];
    let mut au = vec![0.0; nu];

    for ip in 0..np {
        let p = &ctx.p_vectors[ip];
        let fc = model.filtered_coefficients(t, p)?;
        for (iu, u) in config.control_set.iter().enumerate() {
            let mut drift_u = 0.0;
            for l in 0..d {
                drift_u += fc.b_hat[l] * u[l];
            }
            bu[iu] = drift_u;
            let mut a = 0.0;
            for j in 0..d {
                let mut sj = 0.0;
                for l in 0..d {
                    sj += u[l] * fc.sigma_hat_at(l, j, d);
                }
                a += sj * sj;
            }
            au[iu] = a;
        }
        let base = ip * nx;
        let moves = &ctx.p_moves[ip];
        for ix in 0..nx {
            let center = v_next[base + ix];
            let mut p_part = 0.0;
            for &(triple, ip_up, ip_down) in moves {
                p_part += triple.diag * center;
                if triple.up != 0.0 {
                    p_part += triple.up * v_next[ip_up * nx + ix];
                }
                if triple.down != 0.0 {
                    p_part += triple.down * v_next[ip_down * nx + ix];
                }
            }
            let rx = fc.r_hat * grid.x_at(ix);
            let mut best = f64::INFINITY;
            let mut best_iu = 0u32;
            let mut best_reflected = 0.0;
            for iu in 0..nu {
                let b = rx + bu[iu];
                let raw = chain::x_triple_from_drift_variance(grid, b, au[iu]);
                let (triple, reflected) = raw.reflected_at_edges(ix, nx);
                let mut candidate = triple.stay * center + p_part;
                if triple.up != 0.0 {
                    candidate += triple.up * v_next[base + ix + 1];
                }
                if triple.down != 0.0 {
                    candidate += triple.down * v_next[base + ix - 1];
                }
                // Strict improvement keeps the first (lexicographically
                // smallest) control on ties.
                if candidate < best {
                    best = candidate;
                    best_iu = iu as u32;
                    best_reflected = reflected;
                }
            }
            // NaN candidates lose every `<` comparison, so a node whose
            // every control produced garbage still holds +inf here.
            if !best.is_finite() {
                return Err(Error::NanAtNode {
                    layer: n,
                    x_index: ix,
                    p_index: ip,
                });
            }
            values[base + ix] = best;
            policy[base + ix] = best_iu;
            if best_reflected > 0.0 {
                diag.boundary_hits += 1;
                if best_reflected > diag.max_reflected_mass {
                    diag.max_reflected_mass = best_reflected;
                }
            }
            if best < diag.min_value {
                diag.min_value = best;
            }
        }
    }
    Ok((values, policy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub value: ValueGrid,
    pub policy: PolicyGrid,
    pub diagnostics: SweepDiagnostics,
    /// The stability scan the solve was gated on (`None` when the caller
    /// already checked and asked to skip).
    pub cfl: Option<CflReport>,
}

/// Full backward solve. Validates the model, requires `kappa` to be interior
/// to the wealth grid, and refuses to run on a grid that fails the stability
/// scan.
pub fn solve(model: &RegimeModel, grid: &GridSpec, config: &SolverConfig) -> Result<SolveResult> {
    let report = chain::check_cfl(model, grid, &config.control_set)?;
    if !report.pass {
        let worst = report.argmax;
        return Err(Error::CflFailed {
            max_coefficient: report.max_x_coefficient,
            layer: worst.layer,
            x_index: worst.x_index,
            p_index: worst.p_index,
        });
    }
    let mut result = solve_unchecked(model, grid, config)?;
    result.cfl = Some(report);
    Ok(result)
}

/// Backward solve without the stability scan; for call sites that have
/// already run [`chain::check_cfl`] for this grid and control set (the
/// multiplier search evaluates many solves on one grid).
pub fn solve_unchecked(
    model: &RegimeModel,
    grid: &GridSpec,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let errs = model.validate();
    if !errs.is_empty() {
        return Err(Error::InvalidModel(errs));
    }
    if config.control_set.dim() != model.d {
        return Err(Error::Dimension {
            context: "solve: control dimension",
            expected: model.d,
            got: config.control_set.dim(),
        });
    }
    if config.control_set.is_empty() {
        return Err(Error::InvalidGrid("control set is empty".into()));
    }
    if !(grid.x_min < config.kappa && config.kappa < grid.x_max) {
        return Err(Error::InvalidGrid(format!(
            "target mean kappa = {} must be interior to the wealth grid [{}, {}]",
            config.kappa, grid.x_min, grid.x_max
        )));
    }

    let ctx = SweepContext::new(model, grid)?;
    let n_steps = grid.n_steps;
    let terminal = terminal_values(grid, config.lambda, config.kappa);
    let mut diag = SweepDiagnostics {
        boundary_hits: 0,
        max_reflected_mass: 0.0,
        min_value: terminal.iter().copied().fold(f64::INFINITY, f64::min),
    };

    let mut layers = vec![Vec::new(); n_steps + 1];
    let mut policies = vec![Vec::new(); n_steps];
    layers[n_steps] = terminal;
    for n in (0..n_steps).rev() {
        let (values, policy) = step_layer(model, grid, config, &ctx, &layers[n + 1], n, &mut diag)?;
        layers[n] = values;
        policies[n] = policy;
    }

    let digest = model.digest();
    Ok(SolveResult {
        value: ValueGrid {
            lambda: config.lambda,
            kappa: config.kappa,
            grid: grid.clone(),
            model_digest: digest.clone(),
            layers,
        },
        policy: PolicyGrid {
            lambda: config.lambda,
            kappa: config.kappa,
            grid: grid.clone(),
            control_set: config.control_set.clone(),
            model_digest: digest,
            layers: policies,
        },
        diagnostics: diag,
        cfl: None,
    })
}

/// How to hunt for the dual maximizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    GoldenSection,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub bracket: (f64, f64),
    /// Absolute tolerance on the multiplier.
    pub tol: f64,
    pub method: SearchMethod,
    pub max_iter: usize,
}

impl Default for LambdaSearch {
    fn default() -> Self {
        Self {
            bracket: (-10.0, 10.0),
            tol: 1e-3,
            method: SearchMethod::GoldenSection,
            max_iter: 200,
        }
    }
}

/// Everything the frontier machinery needs on top of the model and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierConfig {
    pub control_set: ControlSet,
    pub x0: f64,
    pub p0: Vec<f64>,
    pub search: LambdaSearch,
    /// Monte Carlo validation size per target.
    pub n_paths: usize,
    pub seed: u64,
}

/// One point of the mean-variance frontier. The variance is the closed-loop
/// Monte Carlo estimate under the extracted policy — the dual value only
/// equals it when the mean constraint binds, so both are reported, along
/// with the achieved constraint residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub kappa: f64,
    pub lambda_star: f64,
    /// `d(lambda*) = V(s, x0, p0)`.
    pub dual_value: f64,
    pub mc_mean: f64,
    /// Sample variance of terminal wealth under the policy; the frontier
    /// ordinate.
    pub variance: f64,
    pub std_dev: f64,
    /// `|mc_mean - kappa|`.
    pub residual: f64,
    /// 95% half-width on the Monte Carlo mean.
    pub mean_ci_half_width: f64,
}

#[derive(Debug, Clone)]
pub struct LambdaOutcome {
    pub lambda_star: f64,
    pub dual_value: f64,
    pub point: FrontierPoint,
    pub report: McReport,
    /// The solve at the optimal multiplier (owns the policy the Monte Carlo
    /// ran under).
    pub solve: SolveResult,
    /// Every dual evaluation made by the search, sorted by multiplier.
    pub dual_evals: Vec<(f64, f64)>,
    /// Whether the bracket had to be widened to enclose the maximizer.
    pub widened: bool,
}

/// Memoizing dual evaluator: `d(lambda) = V_lambda(s, x0, p0)`.
struct DualCache<'a> {
    model: &'a RegimeModel,
    grid: &'a GridSpec,
    config: &'a FrontierConfig,
    kappa: f64,
    evals: Vec<(f64, f64)>,
}

impl<'a> DualCache<'a> {
    fn eval(&mut self, lambda: f64) -> Result<f64> {
        if let Some(&(_, v)) = self
            .evals
            .iter()
            .find(|(l, _)| (l - lambda).abs() <= 1e-12 * lambda.abs().max(1.0))
        {
            return Ok(v);
        }
        let solver_config = SolverConfig {
            lambda,
            kappa: self.kappa,
            control_set: self.config.control_set.clone(),
        };
        let result = solve_unchecked(self.model, self.grid, &solver_config)?;
        let value = result.value.at_start(self.config.x0, &self.config.p0)?;
        self.evals.push((lambda, value));
        Ok(value)
    }
}

fn golden_section_max(cache: &mut DualCache, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = cache.eval(c)?;
    let mut fd = cache.eval(d)?;
    for _ in 0..max_iter {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = cache.eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = cache.eval(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

fn nelder_mead_max(cache: &mut DualCache, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let clamp = |x: f64| x.clamp(lo, hi);
    let width = hi - lo;
    let mut best = lo + width / 3.0;
    let mut worst = hi - width / 3.0;
    let mut f_best = cache.eval(best)?;
    let mut f_worst = cache.eval(worst)?;
    if f_worst > f_best {
        std::mem::swap(&mut best, &mut worst);
        std::mem::swap(&mut f_best, &mut f_worst);
    }
    for _ in 0..max_iter {
        if (best - worst).abs() <= tol {
            break;
        }
        let reflected = clamp(best + (best - worst));
        let f_reflected = cache.eval(reflected)?;
        let (candidate, f_candidate) = if f_reflected > f_best {
            let expanded = clamp(best + 2.0 * (best - worst));
            let f_expanded = cache.eval(expanded)?;
            if f_expanded > f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            }
        } else {
            let contracted = 0.5 * (best + worst);
            (contracted, cache.eval(contracted)?)
        };
        if f_candidate <= f_worst && (candidate - worst).abs() < 1e-15 {
            break;
        }
        worst = candidate;
        f_worst = f_candidate;
        if f_worst > f_best {
            std::mem::swap(&mut best, &mut worst);
            std::mem::swap(&mut f_best, &mut f_worst);
        }
    }
    Ok(best)
}

/// Find the dual maximizer for one mean target, then validate the policy by
/// closed-loop Monte Carlo. The bracket is widened once (doubled about its
/// center) if the maximizer lands on an edge; a second edge landing is an
/// error, because a dual that is monotone on a wide bracket means the target
/// mean is not attainable in the model (or the bracket is absurdly off).
pub fn optimize_lambda(
    model: &RegimeModel,
    grid: &GridSpec,
    config: &FrontierConfig,
    kappa: f64,
) -> Result<LambdaOutcome> {
    let report = chain::check_cfl(model, grid, &config.control_set)?;
    if !report.pass {
        let worst = report.argmax;
        return Err(Error::CflFailed {
            max_coefficient: report.max_x_coefficient,
            layer: worst.layer,
            x_index: worst.x_index,
            p_index: worst.p_index,
        });
    }
    optimize_lambda_unchecked(model, grid, config, kappa)
}

/// [`optimize_lambda`] without the stability scan, for callers that have
/// already run (or deliberately overridden) [`chain::check_cfl`] on this
/// grid and control set.
pub fn optimize_lambda_unchecked(
    model: &RegimeModel,
    grid: &GridSpec,
    config: &FrontierConfig,
    kappa: f64,
) -> Result<LambdaOutcome> {
    let mut cache = DualCache {
        model,
        grid,
        config,
        kappa,
        evals: Vec::new(),
    };
    let (mut lo, mut hi) = config.search.bracket;
    if !(lo < hi) {
        return Err(Error::InvalidGrid(format!(
            "multiplier bracket [{lo}, {hi}] is empty"
        )));
    }
    let mut widened = false;
    let lambda_star = loop {
        let candidate = match config.search.method {
            SearchMethod::GoldenSection => {
                golden_section_max(&mut cache, lo, hi, config.search.tol, config.search.max_iter)?
            }
            SearchMethod::NelderMead => {
                nelder_mead_max(&mut cache, lo, hi, config.search.tol, config.search.max_iter)?
            }
        };
        let edge_margin = 0.02 * (hi - lo);
        let on_edge = candidate - lo <= edge_margin || hi - candidate <= edge_margin;
        if !on_edge {
            break candidate;
        }
        if widened {
            return Err(Error::NoInteriorMaximizer { lo, hi });
        }
        let center = 0.5 * (lo + hi);
        let half = hi - lo; // doubled width
        lo = center - half;
        hi = center + half;
        widened = true;
    };

    let dual_value = cache.eval(lambda_star)?;
    let solver_config = SolverConfig {
        lambda: lambda_star,
        kappa,
        control_set: config.control_set.clone(),
    };
    let solve_result = solve_unchecked(model, grid, &solver_config)?;
    let report = simulate::mc_estimate(
        model,
        &solve_result.policy,
        &simulate::SimConfig {
            x0: config.x0,
            p0: config.p0.clone(),
            n_paths: config.n_paths,
            seed: config.seed,
        },
    )?;
    let variance = report.variance.max(0.0);
    let point = FrontierPoint {
        kappa,
        lambda_star,
        dual_value,
        mc_mean: report.mean,
        variance,
        std_dev: variance.sqrt(),
        residual: (report.mean - kappa).abs(),
        mean_ci_half_width: report.mean_ci_half_width,
    };
    let mut dual_evals = cache.evals;
    dual_evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(LambdaOutcome {
        lambda_star,
        dual_value,
        point,
        report,
        solve: solve_result,
        dual_evals,
        widened,
    })
}

/// A frontier sweep: points for the targets that solved, failures for the
/// ones that did not (the sweep continues past per-target errors).
#[derive(Debug, Clone)]
pub struct FrontierSweep {
    pub points: Vec<FrontierPoint>,
    pub failures: Vec<(f64, String)>,
}

/// Sweep [`optimize_lambda`] over a list of mean targets. Every target uses
/// the same base seed, so the result for a given `kappa` does not depend on
/// its position in (or the rest of) the list.
pub fn efficient_frontier(
    model: &RegimeModel,
    grid: &GridSpec,
    config: &FrontierConfig,
    kappas: &[f64],
) -> FrontierSweep {
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for &kappa in kappas {
        match optimize_lambda(model, grid, config, kappa) {
            Ok(outcome) => points.push(outcome.point),
            Err(err) => failures.push((kappa, err.to_string())),
        }
    }
    FrontierSweep { points, failures }
}

/// Evaluate the dual on an explicit multiplier grid (in parallel — each
/// point is an independent solve). Returns `(lambda, d(lambda))` pairs in
/// the order given.
pub fn dual_scan(
    model: &RegimeModel,
    grid: &GridSpec,
    config: &FrontierConfig,
    kappa: f64,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    lambdas
        .par_iter()
        .map(|&lambda| {
            let solver_config = SolverConfig {
                lambda,
                kappa,
                control_set: config.control_set.clone(),
            };
            let result = solve_unchecked(model, grid, &solver_config)?;
            Ok((lambda, result.value.at_start(config.x0, &config.p0)?))
        })
        .collect()
}

/// Largest centered second difference of `(x, f)` pairs sorted by `x`;
/// nonpositive (up to rounding) for samples of a concave function on an
/// equally spaced grid.
pub fn max_second_difference(evals: &[(f64, f64)]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for w in evals.windows(3) {
        let d2 = w[2].1 - 2.0 * w[1].1 + w[0].1;
        if d2 > worst {
            worst = d2;
        }
    }
    worst
}

/// Write the value and policy surfaces as one CSV: a row per node and layer
/// with columns `n, x, p_1..p_m, V, u_1..u_d`. Terminal-layer rows leave the
/// control fields empty.
pub fn write_value_policy_csv<W: std::io::Write>(
    mut w: W,
    value: &ValueGrid,
    policy: &PolicyGrid,
) -> Result<()> {
    let grid = &value.grid;
    let mut header = String::from("n,x");
    for i in 1..=grid.m {
        header.push_str(&format!(",p_{i}"));
    }
    header.push_str(",V");
    let d = policy.control_set.dim();
    for l in 1..=d {
        header.push_str(&format!(",u_{l}"));
    }
    writeln!(w, "{header}")?;
    let p_vectors = grid.p_vectors();
    for n in 0..=grid.n_steps {
        for (ip, p) in p_vectors.iter().enumerate() {
            for ix in 0..grid.nx {
                let mut line = format!("{n},{}", grid.x_at(ix));
                for &pi in p.iter() {
                    line.push_str(&format!(",{pi}"));
                }
                line.push_str(&format!(",{}", value.at(n, ix, ip)));
                if n < grid.n_steps {
                    let u = policy.control(n, ix, ip);
                    for &ul in u {
                        line.push_str(&format!(",{ul}"));
                    }
                } else {
                    for _ in 0..d {
                        line.push(',');
                    }
                }
                writeln!(w, "{line}")?;
            }
        }
    }
    Ok(())
}

/// Read a policy back from the CSV written by [`write_value_policy_csv`].
/// The grid, control set, and metadata come from the accompanying summary;
/// control vectors are matched back to control-set indices exactly (the CSV
/// prints shortest round-trip floats, so a faithful summary makes every row
/// match).
pub fn read_policy_csv<R: std::io::BufRead>(
    reader: R,
    grid: GridSpec,
    control_set: ControlSet,
    lambda: f64,
    kappa: f64,
    model_digest: String,
) -> Result<PolicyGrid> {
    let nodes = grid.n_p_nodes() * grid.nx;
    let d = control_set.dim();
    let m = grid.m;
    let mut layers = vec![vec![0u32; nodes]; grid.n_steps];
    let mut seen = vec![0usize; grid.n_steps];
    let parse_err = |line_no: usize, what: &str| {
        Error::ModelLoad {
            path: format!("policy CSV line {line_no}"),
            reason: what.to_string(),
        }
    };
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line_no == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + m + 1 + d {
            return Err(parse_err(line_no + 1, "wrong number of fields"));
        }
        let n: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no + 1, "bad layer index"))?;
        if n >= grid.n_steps {
            continue; // terminal layer has no policy
        }
        let x: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(line_no + 1, "bad x"))?;
        let mut p = Vec::with_capacity(m);
        for k in 0..m {
            p.push(
                fields[2 + k]
                    .parse::<f64>()
                    .map_err(|_| parse_err(line_no + 1, "bad p"))?,
            );
        }
        let mut u = Vec::with_capacity(d);
        for l in 0..d {
            u.push(
                fields[3 + m + l]
                    .parse::<f64>()
                    .map_err(|_| parse_err(line_no + 1, "bad u"))?,
            );
        }
        let ix = grid.x_index_of(x)?;
        let ip = grid.nearest_p_index(&p)?;
        let iu = control_set
            .iter()
            .position(|pt| pt.iter().zip(&u).all(|(a, b)| (a - b).abs() <= 1e-12))
            .ok_or_else(|| parse_err(line_no + 1, "control not in control set"))?;
        layers[n][ip * grid.nx + ix] = iu as u32;
        seen[n] += 1;
    }
    for &count in &seen {
        if count != nodes {
            return Err(Error::Dimension {
                context: "policy CSV rows per layer",
                expected: nodes,
                got: count,
            });
        }
    }
    PolicyGrid::from_layers(grid, control_set, lambda, kappa, model_digest, layers)
}
