//! Discretized Wonham filter in log space.
//!
//! The conditional regime distribution solves
//!
//! ```text
//! dp_i = sum_j q_ji p_j dt + (1/sigma0) p_i (g_i - alpha_bar) dw2_hat,
//! ```
//!
//! with `alpha_bar = sum_i g_i p_i` and `w2_hat` the innovation process.
//! Stepping `p` directly can go negative, so the scheme advances `v = log p`:
//!
//! ```text
//! v_i(n+1) = v_i(n) + h2 * [ sum_j q_ji p_j / p_i - (g_i - alpha_bar)^2 / (2 sigma0^2) ]
//!            + sqrt(h2) * (g_i - alpha_bar) / sigma0 * eps_n,
//! p(n+1)   = exp(v(n+1)),
//! ```
//!
//! which keeps `p` nonnegative by construction. The penalized variant guards
//! the drift against vanishing components: wherever `p_i < exp(-barrier)` the
//! whole drift bracket is replaced by `-barrier`, which caps how fast a dead
//! component can sink while leaving live components untouched. With every
//! component above the barrier the two variants are the same arithmetic,
//! bit for bit.
//!
//! Renormalization (on by default) projects back to the simplex after each
//! step by shifting `v` by `log sum exp(v)`; the raw mode leaves the small
//! simplex drift of the scheme observable, which some of the diagnostics
//! want.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RegimeModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Time step of the filter recursion.
    pub h2: f64,
    /// Log-space barrier `M`: components below `exp(-M)` get the penalized
    /// drift `-M`.
    pub barrier: f64,
    /// Project `p` back to the simplex after every step.
    pub renormalize: bool,
}

impl FilterConfig {
    pub fn new(h2: f64) -> Self {
        Self {
            h2,
            barrier: 20.0,
            renormalize: true,
        }
    }

    pub fn raw(h2: f64) -> Self {
        Self {
            renormalize: false,
            ..Self::new(h2)
        }
    }
}

/// Filter state at one time point; `p[i] == exp(v[i])` holds by construction
/// for states produced by the stepping functions.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl FilterState {
    /// State from a probability vector; components may be zero (their log is
    /// `-inf`), but negatives and non-finite values are rejected.
    pub fn new(p: Vec<f64>, t: f64) -> Result<Self> {
        for (i, &pi) in p.iter().enumerate() {
            if !pi.is_finite() || pi < 0.0 {
                return Err(Error::NonFinite {
                    context: format!("filter state p[{i}] = {pi}"),
                });
            }
        }
        if p.iter().sum::<f64>() <= 0.0 {
            return Err(Error::NonFinite {
                context: "filter state with zero total mass".to_string(),
            });
        }
        let v = p.iter().map(|&pi| pi.ln()).collect();
        Ok(Self { p, v, t })
    }

    pub fn uniform(m: usize, t: f64) -> Self {
        Self::new(vec![1.0 / m as f64; m], t).expect("uniform state is valid")
    }
}

/// Filtered observation level `alpha_bar = sum_i g_i p_i`.
pub fn alpha_bar(model: &RegimeModel, p: &[f64]) -> Result<f64> {
    if p.len() != model.m {
        return Err(Error::Dimension {
            context: "alpha_bar: p",
            expected: model.m,
            got: p.len(),
        });
    }
    Ok(model.g.iter().zip(p).map(|(g, pi)| g * pi).sum())
}

/// One step of the log-space scheme. Every `p_i` must be strictly positive;
/// states that have touched zero belong to [`filter_step_penalized`].
pub fn filter_step(
    model: &RegimeModel,
    config: &FilterConfig,
    state: &FilterState,
    eps: f64,
) -> Result<FilterState> {
    for (i, &pi) in state.p.iter().enumerate() {
        if !(pi > 0.0) {
            return Err(Error::NonpositiveProbability {
                index: i,
                value: pi,
            });
        }
    }
    step_kernel(model, config, state, eps, false)
}

/// One penalized step; tolerates zero components and caps the drift of
/// near-dead ones at `-barrier`.
pub fn filter_step_penalized(
    model: &RegimeModel,
    config: &FilterConfig,
    state: &FilterState,
    eps: f64,
) -> Result<FilterState> {
    step_kernel(model, config, state, eps, true)
}

fn step_kernel(
    model: &RegimeModel,
    config: &FilterConfig,
    state: &FilterState,
    eps: f64,
    penalized: bool,
) -> Result<FilterState> {
    let m = model.m;
    if state.p.len() != m {
        return Err(Error::Dimension {
            context: "filter step: p",
            expected: m,
            got: state.p.len(),
        });
    }
    if !eps.is_finite() {
        return Err(Error::NonFinite {
            context: format!("filter step driven by eps = {eps}"),
        });
    }
    let p = &state.p;
    let abar = alpha_bar(model, p)?;
    let sigma0 = model.sigma0;
    let sqrt_h2 = config.h2.sqrt();
    let floor = (-config.barrier).exp();

    let mut v = vec![0.0; m];
    for i in 0..m {
        let centered = model.g[i] - abar;
        let drift = if !penalized || p[i] >= floor {
            let mut inflow = 0.0;
            for j in 0..m {
                inflow += model.q_at(j, i) * p[j];
            }
            inflow / p[i] - centered * centered / (2.0 * sigma0 * sigma0)
        } else {
            -config.barrier
        };
        v[i] = state.v[i] + config.h2 * drift + sqrt_h2 * (centered / sigma0) * eps;
    }
    if config.renormalize {
        let total: f64 = v.iter().map(|vi| vi.exp()).sum();
        let log_total = total.ln();
        for vi in &mut v {
            *vi -= log_total;
        }
    }
    let p: Vec<f64> = v.iter().map(|vi| vi.exp()).collect();
    for (i, &pi) in p.iter().enumerate() {
        if pi.is_nan() {
            return Err(Error::NonFinite {
                context: format!("filter step output p[{i}] at t = {}", state.t),
            });
        }
    }
    Ok(FilterState {
        p,
        v,
        t: state.t + config.h2,
    })
}

/// Reconstruct the innovation increments from an observation path and the
/// filter trajectory that was run along it:
///
/// ```text
/// eps_n = (y[n+1] - y[n] - alpha_bar(p[n]) h2) / (sigma0 sqrt(h2)).
/// ```
///
/// `p_path[n]` must be the filter distribution in force on `[t_n, t_{n+1})`,
/// so `p_path` needs at least `y.len() - 1` entries.
pub fn innovation_increments(
    model: &RegimeModel,
    y: &[f64],
    p_path: &[Vec<f64>],
    h2: f64,
) -> Result<Vec<f64>> {
    if y.len() < 2 {
        return Err(Error::Dimension {
            context: "innovation_increments: y",
            expected: 2,
            got: y.len(),
        });
    }
    let n = y.len() - 1;
    if p_path.len() < n {
        return Err(Error::Dimension {
            context: "innovation_increments: p_path",
            expected: n,
            got: p_path.len(),
        });
    }
    let denom = model.sigma0 * h2.sqrt();
    let mut eps = Vec::with_capacity(n);
    for k in 0..n {
        let abar = alpha_bar(model, &p_path[k])?;
        eps.push((y[k + 1] - y[k] - abar * h2) / denom);
    }
    Ok(eps)
}

/// Source of the driving noise for synthetic filter runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsNoise {
    Gaussian,
    /// `+1` or `-1` with equal probability; handy for worst-case stepping
    /// tests because it maximizes `|eps|` at fixed variance.
    Rademacher,
}

impl EpsNoise {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            EpsNoise::Gaussian => rng.sample(StandardNormal),
            EpsNoise::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Dump a filter trajectory as CSV with columns `t, p_1..p_m, v_1..v_m`.
/// Writes nothing for an empty trajectory.
pub fn write_trajectory_csv<W: std::io::Write>(mut w: W, states: &[FilterState]) -> Result<()> {
    let Some(first) = states.first() else {
        return Ok(());
    };
    let m = first.p.len();
    let mut header = String::from("t");
    for i in 1..=m {
        header.push_str(&format!(",p_{i}"));
    }
    for i in 1..=m {
        header.push_str(&format!(",v_{i}"));
    }
    writeln!(w, "{header}")?;
    for state in states {
        let mut line = format!("{}", state.t);
        for &pi in &state.p {
            line.push_str(&format!(",{pi}"));
        }
        for &vi in &state.v {
            line.push_str(&format!(",{vi}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}
