//! The approximating controlled Markov chain on the `(x, p)` grid.
//!
//! Backward value iteration needs a discrete chain that is *locally
//! consistent* with the filtered dynamics: conditional increment means and
//! variances must match the drift and diffusion to first order in the time
//! step `h2`. With spatial step `h1` in both the wealth direction and each
//! probability coordinate, the wealth direction uses the standard explicit
//! triple at drift `b` and variance `a`:
//!
//! ```text
//! stay = 1 - |b| h2 / h1 - a h2 / h1^2
//! up   = (a h2 + 2 h1 h2 b+) / (2 h1^2)
//! down = (a h2 + 2 h1 h2 b-) / (2 h1^2)
//! ```
//!
//! (`b+`/`b-` the positive/negative parts), which sums to one exactly and
//! reproduces `E[dx] = b h2` exactly and `Var[dx] = a h2 + O(h1 h2)`. Each
//! probability coordinate `i` gets an analogous triple driven by the filter
//! drift `c_i = sum_j q_ji p_j` and squared noise loading
//! `A_i = [p_i (g_i - alpha_bar)]^2 / sigma0^2`:
//!
//! ```text
//! up_i   = (A_i h2 + 2 h1 h2 c_i+) / (2 h1^2)
//! down_i = (A_i h2 + 2 h1 h2 c_i-) / (2 h1^2)
//! diag_i = -A_i h2 / h1^2 - |c_i| h2 / h1
//! ```
//!
//! which sums to zero: these are correction weights layered on top of the
//! wealth triple, so the full row over all moves still sums to one.
//!
//! The wealth triple is a probability vector only under the CFL-type
//! condition `|b| h2 / h1 + a h2 / h1^2 <= 1` at every node and control;
//! [`check_cfl`] verifies it by exhaustive scan. The probability triples
//! carry no such guarantee — their diagonal terms are reported by the scan
//! as a monotonicity diagnostic.
//!
//! Grid modes for the `p` directions:
//!
//! * [`PGridMode::Single`] — one regime; the filter is pinned at `p = (1)`
//!   and no probability moves exist.
//! * [`PGridMode::Reduced`] — two regimes; the simplex is one-dimensional, so
//!   only `p_1` is gridded and only the coordinate-0 triple is applied. (On
//!   the simplex the two coordinate triples are mirror images; applying both
//!   onto one axis would double-count the filter dynamics.)
//! * [`PGridMode::Full`] — the full product grid over all `m` coordinates,
//!   including off-simplex nodes; they are computed like any other node and
//!   simply not reported by simplex-aware consumers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ControlSet, RegimeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PGridMode {
    Single,
    Reduced,
    Full,
}

/// Geometry of the space-time grid.
///
/// Invariants enforced at construction: `h1`, `h2` positive; the horizon
/// length is an integer multiple of `h2`; the wealth range is an integer
/// multiple of `h1` wide; `1` is an integer multiple of `h1` (so the
/// probability axes land exactly on `0` and `1`); the mode matches `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h1: f64,
    pub h2: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// Horizon copied from the model the grid was built for.
    pub s: f64,
    pub t_end: f64,
    /// Number of time steps; layer `n` lives at `t = s + n h2`, `n = 0..=n_steps`.
    pub n_steps: usize,
    /// Number of wealth nodes.
    pub nx: usize,
    /// Nodes per probability axis, `1/h1 + 1`.
    pub p_axis_len: usize,
    pub mode: PGridMode,
    /// Number of regimes, for decoding probability indices.
    pub m: usize,
}

fn near_integer(x: f64) -> Option<usize> {
    let k = x.round();
    if k >= 0.0 && (x - k).abs() <= 1e-9 * x.abs().max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

impl GridSpec {
    pub fn new(
        model: &RegimeModel,
        h1: f64,
        h2: f64,
        x_min: f64,
        x_max: f64,
        mode: Option<PGridMode>,
    ) -> Result<Self> {
        if !(h1 > 0.0) || !h1.is_finite() {
            return Err(Error::InvalidGrid(format!("h1 = {h1} must be positive")));
        }
        if !(h2 > 0.0) || !h2.is_finite() {
            return Err(Error::InvalidGrid(format!("h2 = {h2} must be positive")));
        }
        if !(x_min < x_max) {
            return Err(Error::InvalidGrid(format!(
                "x range [{x_min}, {x_max}] is empty"
            )));
        }
        let len = model.horizon.length();
        let n_steps = near_integer(len / h2).filter(|&n| n > 0).ok_or_else(|| {
            Error::InvalidGrid(format!(
                "horizon length {len} is not a positive integer multiple of h2 = {h2}"
            ))
        })?;
        let x_cells = near_integer((x_max - x_min) / h1)
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::InvalidGrid(format!(
                    "x range width {} is not a positive integer multiple of h1 = {h1}",
                    x_max - x_min
                ))
            })?;
        let p_cells = near_integer(1.0 / h1).filter(|&n| n > 0).ok_or_else(|| {
            Error::InvalidGrid(format!(
                "1 is not an integer multiple of h1 = {h1}; probability axes cannot close"
            ))
        })?;
        let mode = mode.unwrap_or(match model.m {
            1 => PGridMode::Single,
            2 => PGridMode::Reduced,
            _ => PGridMode::Full,
        });
        match mode {
            PGridMode::Single if model.m != 1 => {
                return Err(Error::InvalidGrid(format!(
                    "single-node probability grid needs m = 1, model has m = {}",
                    model.m
                )));
            }
            PGridMode::Reduced if model.m != 2 => {
                return Err(Error::InvalidGrid(format!(
                    "reduced probability grid needs m = 2, model has m = {}",
                    model.m
                )));
            }
            _ => {}
        }
        Ok(Self {
            h1,
            h2,
            x_min,
            x_max,
            s: model.horizon.s,
            t_end: model.horizon.t_end,
            n_steps,
            nx: x_cells + 1,
            p_axis_len: p_cells + 1,
            mode,
            m: model.m,
        })
    }

    #[inline]
    pub fn x_at(&self, ix: usize) -> f64 {
        self.x_min + self.h1 * ix as f64
    }

    #[inline]
    pub fn t_at(&self, layer: usize) -> f64 {
        self.s + self.h2 * layer as f64
    }

    /// Number of probability nodes in the configured mode.
    pub fn n_p_nodes(&self) -> usize {
        match self.mode {
            PGridMode::Single => 1,
            PGridMode::Reduced => self.p_axis_len,
            PGridMode::Full => self.p_axis_len.pow(self.m as u32),
        }
    }

    /// Probability coordinates whose transition triples the solver applies.
    pub fn active_coordinates(&self) -> Vec<usize> {
        match self.mode {
            PGridMode::Single => Vec::new(),
            PGridMode::Reduced => vec![0],
            PGridMode::Full => (0..self.m).collect(),
        }
    }

    /// Per-axis position of probability node `ip` along each active axis.
    /// In full mode coordinate 0 varies slowest, matching lexicographic
    /// order over `(p_1, …, p_m)`.
    pub fn p_digits(&self, ip: usize) -> Vec<usize> {
        match self.mode {
            PGridMode::Single => Vec::new(),
            PGridMode::Reduced => vec![ip],
            PGridMode::Full => {
                let mut digits = vec![0usize; self.m];
                let mut rest = ip;
                for k in (0..self.m).rev() {
                    digits[k] = rest % self.p_axis_len;
                    rest /= self.p_axis_len;
                }
                digits
            }
        }
    }

    /// Full m-vector of probabilities at node `ip`.
    pub fn p_vector(&self, ip: usize) -> Vec<f64> {
        match self.mode {
            PGridMode::Single => vec![1.0],
            PGridMode::Reduced => {
                let p1 = self.h1 * ip as f64;
                vec![p1, 1.0 - p1]
            }
            PGridMode::Full => self
                .p_digits(ip)
                .into_iter()
                .map(|d| self.h1 * d as f64)
                .collect(),
        }
    }

    /// All probability node vectors, in index order.
    pub fn p_vectors(&self) -> Vec<Vec<f64>> {
        (0..self.n_p_nodes()).map(|ip| self.p_vector(ip)).collect()
    }

    /// Index of the wealth node nearest to `x`, clamped into the grid.
    pub fn nearest_x_index(&self, x: f64) -> usize {
        let raw = ((x - self.x_min) / self.h1).round();
        raw.clamp(0.0, (self.nx - 1) as f64) as usize
    }

    /// Index of the probability node nearest to `p` (componentwise rounding).
    pub fn nearest_p_index(&self, p: &[f64]) -> Result<usize> {
        if p.len() != self.m {
            return Err(Error::Dimension {
                context: "nearest_p_index: p",
                expected: self.m,
                got: p.len(),
            });
        }
        let clamp_axis = |value: f64| -> usize {
            let raw = (value / self.h1).round();
            raw.clamp(0.0, (self.p_axis_len - 1) as f64) as usize
        };
        Ok(match self.mode {
            PGridMode::Single => 0,
            PGridMode::Reduced => clamp_axis(p[0]),
            PGridMode::Full => {
                let mut idx = 0usize;
                for &pi in p {
                    idx = idx * self.p_axis_len + clamp_axis(pi);
                }
                idx
            }
        })
    }

    /// Exact grid index of `x`, or an error if `x` is not a node.
    pub fn x_index_of(&self, x: f64) -> Result<usize> {
        let raw = (x - self.x_min) / self.h1;
        let k = raw.round();
        if (raw - k).abs() > 1e-9 || k < 0.0 || k as usize >= self.nx {
            return Err(Error::OffGrid {
                context: "x node",
                value: x,
            });
        }
        Ok(k as usize)
    }
}

/// One-step wealth transition probabilities at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XTriple {
    pub stay: f64,
    pub up: f64,
    pub down: f64,
}

impl XTriple {
    /// Fold outward moves at the grid edge back into `stay`. Returns the
    /// reflected triple and how much probability mass was turned back.
    pub fn reflected_at_edges(self, ix: usize, nx: usize) -> (XTriple, f64) {
        let mut out = self;
        let mut reflected = 0.0;
        if ix + 1 >= nx && out.up != 0.0 {
            reflected += out.up;
            out.stay += out.up;
            out.up = 0.0;
        }
        if ix == 0 && out.down != 0.0 {
            reflected += out.down;
            out.stay += out.down;
            out.down = 0.0;
        }
        (out, reflected)
    }
}

/// Correction triple for one probability coordinate; sums to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PTriple {
    pub up: f64,
    pub down: f64,
    pub diag: f64,
}

impl PTriple {
    /// Clamp excursions that would leave the probability axis: at the top
    /// node the up-weight folds into the diagonal, at the bottom node the
    /// down-weight does. The zero sum of the triple is preserved.
    pub fn clamped(self, axis_pos: usize, axis_len: usize) -> PTriple {
        let mut out = self;
        if axis_pos + 1 >= axis_len {
            out.diag += out.up;
            out.up = 0.0;
        }
        if axis_pos == 0 {
            out.diag += out.down;
            out.down = 0.0;
        }
        out
    }
}

/// Wealth transition triple at `(t, x, p)` under control `u`. The raw
/// formula: edge reflection is applied separately by the consumer because it
/// depends on where the node sits.
pub fn x_transition_probs(
    model: &RegimeModel,
    grid: &GridSpec,
    t: f64,
    x: f64,
    p: &[f64],
    u: &[f64],
) -> Result<XTriple> {
    let b = model.drift(t, x, p, u)?;
    let (_, a) = model.diffusion(t, p, u)?;
    Ok(x_triple_from_drift_variance(grid, b, a))
}

#[inline]
pub(crate) fn x_triple_from_drift_variance(grid: &GridSpec, b: f64, a: f64) -> XTriple {
    let h1 = grid.h1;
    let h2 = grid.h2;
    let b_plus = b.max(0.0);
    let b_minus = (-b).max(0.0);
    let denom = 2.0 * h1 * h1;
    let up = (a * h2 + 2.0 * h1 * h2 * b_plus) / denom;
    let down = (a * h2 + 2.0 * h1 * h2 * b_minus) / denom;
    let stay = 1.0 - b.abs() * h2 / h1 - a * h2 / (h1 * h1);
    XTriple { stay, up, down }
}

/// Transition correction triples for every probability coordinate at `p`.
/// These depend only on `p` (the generator and signal levels are
/// time-invariant), and are computed for all `m` coordinates regardless of
/// grid mode — the solver decides which ones to apply.
pub fn p_transition_terms(model: &RegimeModel, grid: &GridSpec, p: &[f64]) -> Result<Vec<PTriple>> {
    if p.len() != model.m {
        return Err(Error::Dimension {
            context: "p_transition_terms: p",
            expected: model.m,
            got: p.len(),
        });
    }
    let abar = crate::filter::alpha_bar(model, p)?;
    let h1 = grid.h1;
    let h2 = grid.h2;
    let denom = 2.0 * h1 * h1;
    let inv_sigma0_sq = 1.0 / (model.sigma0 * model.sigma0);
    let mut triples = Vec::with_capacity(model.m);
    for i in 0..model.m {
        let loading = p[i] * (model.g[i] - abar);
        let big_a = inv_sigma0_sq * loading * loading;
        let mut c = 0.0;
        for j in 0..model.m {
            c += model.q_at(j, i) * p[j];
        }
        let c_plus = c.max(0.0);
        let c_minus = (-c).max(0.0);
        triples.push(PTriple {
            up: (big_a * h2 + 2.0 * h1 * h2 * c_plus) / denom,
            down: (big_a * h2 + 2.0 * h1 * h2 * c_minus) / denom,
            diag: -big_a * h2 / (h1 * h1) - c.abs() * h2 / h1,
        });
    }
    Ok(triples)
}

/// Location of one CFL violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CflViolation {
    pub layer: usize,
    pub x_index: usize,
    pub p_index: usize,
    pub control_index: usize,
    pub coefficient: f64,
}

/// Result of the exhaustive stability scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CflReport {
    /// Max over all (layer, node, control) of `|b| h2/h1 + a h2/h1^2`.
    pub max_x_coefficient: f64,
    /// Where the max was attained.
    pub argmax: CflViolation,
    /// `max_x_coefficient <= 1`, i.e. every wealth triple is a probability
    /// vector.
    pub pass: bool,
    /// Total number of offending (layer, node, control) combinations.
    pub n_violations: usize,
    /// The first few violations, for diagnostics.
    pub violations: Vec<CflViolation>,
    /// Max over probability nodes and coordinates of `|diag_i|`. The scheme
    /// does not require this below one, but values near or above one warn
    /// that the probability corrections are large relative to the layer and
    /// monotonicity of the sweep degrades.
    pub max_p_diag: f64,
}

const MAX_REPORTED_VIOLATIONS: usize = 16;

/// Exhaustive stability scan over every layer, grid node, and control.
pub fn check_cfl(model: &RegimeModel, grid: &GridSpec, controls: &ControlSet) -> Result<CflReport> {
    if controls.dim() != model.d {
        return Err(Error::Dimension {
            context: "check_cfl: control dimension",
            expected: model.d,
            got: controls.dim(),
        });
    }
    let d = model.d;
    let h1 = grid.h1;
    let h2 = grid.h2;
    let p_vectors = grid.p_vectors();

    let mut max_coeff = f64::NEG_INFINITY;
    let mut argmax = CflViolation {
        layer: 0,
        x_index: 0,
        p_index: 0,
        control_index: 0,
        coefficient: 0.0,
    };
    let mut n_violations = 0usize;
    let mut violations = Vec::new();

    let mut sigma_row = vec![0.0; d];
    for layer in 0..grid.n_steps {
        let t = grid.t_at(layer);
        for (ip, p) in p_vectors.iter().enumerate() {
            let fc = model.filtered_coefficients(t, p)?;
            for (iu, u) in controls.iter().enumerate() {
                let mut a = 0.0;
                for j in 0..d {
                    let mut sj = 0.0;
                    for l in 0..d {
                        sj += u[l] * fc.sigma_hat_at(l, j, d);
                    }
                    sigma_row[j] = sj;
                    a += sj * sj;
                }
                let mut bu = 0.0;
                for l in 0..d {
                    bu += fc.b_hat[l] * u[l];
                }
                let a_part = a * h2 / (h1 * h1);
                for ix in 0..grid.nx {
                    let b = fc.r_hat * grid.x_at(ix) + bu;
                    let coeff = b.abs() * h2 / h1 + a_part;
                    if coeff > max_coeff {
                        max_coeff = coeff;
                        argmax = CflViolation {
                            layer,
                            x_index: ix,
                            p_index: ip,
                            control_index: iu,
                            coefficient: coeff,
                        };
                    }
                    if coeff > 1.0 {
                        n_violations += 1;
                        if violations.len() < MAX_REPORTED_VIOLATIONS {
                            violations.push(CflViolation {
                                layer,
                                x_index: ix,
                                p_index: ip,
                                control_index: iu,
                                coefficient: coeff,
                            });
                        }
                    }
                }
            }
        }
    }

    let mut max_p_diag = 0.0f64;
    for p in &p_vectors {
        for triple in p_transition_terms(model, grid, p)? {
            max_p_diag = max_p_diag.max(triple.diag.abs());
        }
    }

    Ok(CflReport {
        max_x_coefficient: max_coeff,
        argmax,
        pass: max_coeff <= 1.0,
        n_violations,
        violations,
        max_p_diag,
    })
}

/// Conditional one-step moments implied by the wealth triple, next to their
/// analytic targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyStats {
    /// `h1 (up - down)`.
    pub mean: f64,
    /// `h1^2 (up + down) - mean^2`.
    pub variance: f64,
    /// `b h2` — matched exactly by construction.
    pub target_mean: f64,
    /// `a h2` — matched up to `h1 h2 |b| + (h2 b)^2`.
    pub target_variance: f64,
}

pub fn local_consistency_stats(
    model: &RegimeModel,
    grid: &GridSpec,
    t: f64,
    x: f64,
    p: &[f64],
    u: &[f64],
) -> Result<ConsistencyStats> {
    let b = model.drift(t, x, p, u)?;
    let (_, a) = model.diffusion(t, p, u)?;
    let triple = x_triple_from_drift_variance(grid, b, a);
    let mean = grid.h1 * (triple.up - triple.down);
    let second = grid.h1 * grid.h1 * (triple.up + triple.down);
    Ok(ConsistencyStats {
        mean,
        variance: second - mean * mean,
        target_mean: b * grid.h2,
        target_variance: a * grid.h2,
    })
}
