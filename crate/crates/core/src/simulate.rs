//! Closed-loop Monte Carlo under the true (partially observed) dynamics.
//!
//! A policy produced by the backward solver is validated by simulating the
//! original system, not the approximating chain: the regime follows the
//! continuous-time Markov chain generated by `Q`, wealth follows an
//! Euler–Maruyama step with the *true* regime's coefficients frozen at the
//! left endpoint, the observation increment is `dy = g(regime) h2 +
//! sigma0 sqrt(h2) Z`, and the controller sees only the filter state fed by
//! those increments. Controls are looked up at the nearest grid node. A
//! wealth excursion past the box edge is clipped back to the edge — the
//! simulated dynamics live on the same box the policy was computed on — and
//! the path is flagged; runs where more than 1% of paths get clipped carry a
//! warning, because there the box, not the market, is shaping the results.
//!
//! Reproducibility contract: path `i` of a run with seed `s` draws from a
//! counter-based generator seeded with `s` on stream `i`, consuming, in
//! order, (1) the initial regime, (2) the regime path's holding times and
//! jump targets over the whole horizon, (3) per step, the wealth Brownian
//! increments then the observation noise. Results are collected in path
//! order and reduced sequentially, so reports are bit-identical for a given
//! seed regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{alpha_bar, filter_step_penalized, FilterConfig, FilterState};
use crate::model::RegimeModel;
use crate::solver::PolicyGrid;

/// A realized path of the hidden chain on `[t0, t1)`: `states[k]` is active
/// from `times[k]` until `times[k + 1]` (or `t1` for the last segment).
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    pub times: Vec<f64>,
    pub states: Vec<usize>,
}

impl RegimePath {
    /// State active at time `t` (left-continuous convention: the segment
    /// containing `t`).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&tau| tau <= t);
        self.states[k.saturating_sub(1).min(self.states.len() - 1)]
    }

    pub fn n_jumps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Sample the initial regime from a probability vector.
pub fn sample_initial_regime<R: Rng>(p0: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = p0.iter().sum();
    if !(total > 0.0) || p0.iter().any(|&pi| !(pi >= 0.0)) {
        return Err(Error::NonFinite {
            context: "initial regime distribution".into(),
        });
    }
    let draw: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &pi) in p0.iter().enumerate() {
        acc += pi;
        if draw < acc {
            return Ok(i);
        }
    }
    Ok(p0.len() - 1)
}

/// Sample a trajectory of the hidden chain on `[t0, t1)` starting from
/// `initial`: exponential holding times with rate `-q_ii`, jump targets
/// with probabilities `q_ij / (-q_ii)`. A state with `q_ii = 0` is
/// absorbing.
pub fn sample_regime_path<R: Rng>(
    model: &RegimeModel,
    initial: usize,
    t0: f64,
    t1: f64,
    rng: &mut R,
) -> Result<RegimePath> {
    if initial >= model.m {
        return Err(Error::Dimension {
            context: "initial regime",
            expected: model.m,
            got: initial,
        });
    }
    let mut times = vec![t0];
    let mut states = vec![initial];
    let mut t = t0;
    let mut state = initial;
    loop {
        let rate = -model.q_at(state, state);
        if rate <= 0.0 {
            break;
        }
        let hold = Exp::new(rate)
            .map_err(|_| Error::NonFinite {
                context: format!("holding rate in regime {state}"),
            })?
            .sample(rng);
        t += hold;
        if t >= t1 {
            break;
        }
        // Jump target: off-diagonal rates normalized by the exit rate.
        let draw: f64 = rng.gen::<f64>() * rate;
        let mut acc = 0.0;
        let mut next = state;
        for j in 0..model.m {
            if j == state {
                continue;
            }
            acc += model.q_at(state, j);
            if draw < acc {
                next = j;
                break;
            }
        }
        if next == state {
            // Rounding pushed the draw past the last bucket; take the last
            // reachable state.
            next = (0..model.m)
                .rev()
                .find(|&j| j != state && model.q_at(state, j) > 0.0)
                .unwrap_or(state);
            if next == state {
                break;
            }
        }
        times.push(t);
        states.push(next);
        state = next;
    }
    Ok(RegimePath { times, states })
}

/// One simulated closed-loop trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    /// Layer times `s, s + h2, ..., T`.
    pub t: Vec<f64>,
    /// Wealth at each layer; always inside the policy's box.
    pub x: Vec<f64>,
    /// True regime at each layer's left endpoint.
    pub regime: Vec<usize>,
    /// Filter state at each layer.
    pub p: Vec<Vec<f64>>,
    /// Control applied on each step (one fewer than layers).
    pub controls: Vec<Vec<f64>>,
    /// Whether any step tried to leave the box and was clipped to its edge.
    pub clipped: bool,
}

impl SimPath {
    pub fn terminal_wealth(&self) -> f64 {
        *self.x.last().expect("paths have at least the initial layer")
    }
}

/// Simulate one closed-loop path under `policy` from `(x0, p0)`, drawing
/// all randomness from `rng` in the documented order.
pub fn simulate_closed_loop<R: Rng>(
    model: &RegimeModel,
    policy: &PolicyGrid,
    x0: f64,
    p0: &[f64],
    rng: &mut R,
) -> Result<SimPath> {
    let grid = &policy.grid;
    let h2 = grid.h2;
    let sqrt_h2 = h2.sqrt();
    let n_steps = grid.n_steps;
    let d = model.d;

    let initial = sample_initial_regime(p0, rng)?;
    let path = sample_regime_path(model, initial, grid.s, grid.t_end, rng)?;

    let filter_cfg = FilterConfig::new(h2);
    let mut state = FilterState::new(p0.to_vec(), grid.s)?;
    let mut clipped = false;
    let mut x = x0;
    if x < grid.x_min || x > grid.x_max {
        x = x.clamp(grid.x_min, grid.x_max);
        clipped = true;
    }
    let mut jump_cursor = 0usize;

    let mut t_out = Vec::with_capacity(n_steps + 1);
    let mut x_out = Vec::with_capacity(n_steps + 1);
    let mut regime_out = Vec::with_capacity(n_steps + 1);
    let mut p_out = Vec::with_capacity(n_steps + 1);
    let mut controls = Vec::with_capacity(n_steps);

    for n in 0..n_steps {
        let t = grid.t_at(n);
        while jump_cursor + 1 < path.times.len() && path.times[jump_cursor + 1] <= t {
            jump_cursor += 1;
        }
        let regime = path.states[jump_cursor];
        t_out.push(t);
        x_out.push(x);
        regime_out.push(regime);
        p_out.push(state.p.clone());

        let ix = grid.nearest_x_index(x);
        let ip = grid.nearest_p_index(&state.p)?;
        let u = policy.control(n, ix, ip);
        controls.push(u.to_vec());

        // Wealth under the true regime's coefficients, frozen at the left
        // endpoint.
        let r = model.rate(t, regime);
        let mut drift = r * x;
        for l in 0..d {
            drift += (model.appreciation(l, t, regime) - r) * u[l];
        }
        let mut diffusion = 0.0;
        for j in 0..d {
            let mut sj = 0.0;
            for l in 0..d {
                sj += u[l] * model.volatility(l, j, t, regime);
            }
            let w: f64 = StandardNormal.sample(rng);
            diffusion += sj * w;
        }
        x += drift * h2 + diffusion * sqrt_h2;
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: format!("wealth at step {n}"),
            });
        }
        // Keep the simulated wealth on the box the policy was computed on;
        // an excursion is pulled back to the edge and the path flagged.
        if x < grid.x_min || x > grid.x_max {
            x = x.clamp(grid.x_min, grid.x_max);
            clipped = true;
        }

        // Observation increment and the innovation the filter sees.
        let z: f64 = StandardNormal.sample(rng);
        let dy = model.g[regime] * h2 + model.sigma0 * sqrt_h2 * z;
        let eps = (dy - alpha_bar(model, &state.p)? * h2) / (model.sigma0 * sqrt_h2);
        state = filter_step_penalized(model, &filter_cfg, &state, eps)?;
    }
    let t_end = grid.t_at(n_steps);
    while jump_cursor + 1 < path.times.len() && path.times[jump_cursor + 1] <= t_end {
        jump_cursor += 1;
    }
    t_out.push(t_end);
    x_out.push(x);
    regime_out.push(path.states[jump_cursor]);
    p_out.push(state.p.clone());

    Ok(SimPath {
        t: t_out,
        x: x_out,
        regime: regime_out,
        p: p_out,
        controls,
        clipped,
    })
}

/// Monte Carlo run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub x0: f64,
    pub p0: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

/// Summary of a closed-loop Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n_paths: usize,
    /// Sample mean of terminal wealth.
    pub mean: f64,
    /// Unbiased sample variance of terminal wealth.
    pub variance: f64,
    pub std_dev: f64,
    /// 95% half-width on the mean.
    pub mean_ci_half_width: f64,
    /// Sample mean of `(x(T) + lambda - kappa)^2 - lambda^2`.
    pub objective_mean: f64,
    pub objective_ci_half_width: f64,
    /// `|mean - kappa|`.
    pub constraint_residual: f64,
    /// Paths clipped at the box edge at least once.
    pub clipped_paths: usize,
    pub clipped_fraction: f64,
    /// Set when more than 1% of paths were clipped: the box, rather than
    /// the market, is then shaping the statistics.
    pub clipping_warning: bool,
    pub lambda: f64,
    pub kappa: f64,
}

fn mean_and_ci(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss = samples.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>();
    let variance = if samples.len() > 1 { ss / (n - 1.0) } else { 0.0 };
    let half_width = 1.96 * (variance / n).sqrt();
    (mean, variance, half_width)
}

/// Run `n_paths` independent closed-loop paths and summarize terminal
/// wealth. Deterministic for a given seed: each path has its own stream and
/// the reduction is sequential in path order.
pub fn mc_estimate(
    model: &RegimeModel,
    policy: &PolicyGrid,
    config: &SimConfig,
) -> Result<McReport> {
    if config.n_paths == 0 {
        return Err(Error::InvalidGrid("n_paths must be positive".into()));
    }
    if config.p0.len() != model.m {
        return Err(Error::Dimension {
            context: "mc_estimate: p0",
            expected: model.m,
            got: config.p0.len(),
        });
    }
    let outcomes: Vec<(f64, bool)> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let path = simulate_closed_loop(model, policy, config.x0, &config.p0, &mut rng)?;
            Ok((path.terminal_wealth(), path.clipped))
        })
        .collect::<Result<_>>()?;

    let terminal: Vec<f64> = outcomes.iter().map(|&(x, _)| x).collect();
    let clipped_paths = outcomes.iter().filter(|&&(_, c)| c).count();
    let (mean, variance, mean_ci_half_width) = mean_and_ci(&terminal);
    let (lambda, kappa) = (policy.lambda, policy.kappa);
    let objective: Vec<f64> = terminal
        .iter()
        .map(|&x| {
            let shifted = x + lambda - kappa;
            shifted * shifted - lambda * lambda
        })
        .collect();
    let (objective_mean, _, objective_ci_half_width) = mean_and_ci(&objective);
    Ok(McReport {
        n_paths: config.n_paths,
        mean,
        variance,
        std_dev: variance.max(0.0).sqrt(),
        mean_ci_half_width,
        objective_mean,
        objective_ci_half_width,
        constraint_residual: (mean - kappa).abs(),
        clipped_paths,
        clipped_fraction: clipped_paths as f64 / config.n_paths as f64,
        clipping_warning: clipped_paths as f64 > 0.01 * config.n_paths as f64,
        lambda,
        kappa,
    })
}

/// Regenerate the first `n` paths of the Monte Carlo run described by
/// `config`. Path `i` draws from stream `i` of the seeded generator exactly
/// as [`mc_estimate`] does, so the sample is the estimate's own population,
/// path for path — useful for inspecting individual trajectories behind a
/// report without re-running anything stochastic.
pub fn sample_paths(
    model: &RegimeModel,
    policy: &PolicyGrid,
    config: &SimConfig,
    n: usize,
) -> Result<Vec<SimPath>> {
    (0..n.min(config.n_paths))
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            simulate_closed_loop(model, policy, config.x0, &config.p0, &mut rng)
        })
        .collect()
}

/// Write one simulated path as CSV with columns
/// `t, x, regime, p_1..p_m, u_1..u_d` (control fields empty on the final
/// row, where no control is applied).
pub fn write_path_csv<W: std::io::Write>(mut w: W, path: &SimPath) -> Result<()> {
    let m = path.p.first().map_or(0, Vec::len);
    let d = path.controls.first().map_or(0, Vec::len);
    let mut header = String::from("t,x,regime");
    for i in 1..=m {
        header.push_str(&format!(",p_{i}"));
    }
    for l in 1..=d {
        header.push_str(&format!(",u_{l}"));
    }
    writeln!(w, "{header}")?;
    for k in 0..path.t.len() {
        let mut line = format!("{},{},{}", path.t[k], path.x[k], path.regime[k]);
        for &pi in &path.p[k] {
            line.push_str(&format!(",{pi}"));
        }
        if k < path.controls.len() {
            for &ul in &path.controls[k] {
                line.push_str(&format!(",{ul}"));
            }
        } else {
            for _ in 0..d {
                line.push(',');
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}
