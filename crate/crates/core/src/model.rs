//! Market primitives under regime switching.
//!
//! The hidden regime `alpha(t)` lives in `{0, …, m-1}` with generator `Q`
//! (row-major, rows summing to zero). Conditional on the regime, the market
//! coefficients are affine in time: the short rate `r(t, i)`, per-stock
//! appreciation rates `b_l(t, i)`, and the volatility matrix
//! `sigma_bar[l][j](t, i)`. The regime also drives the observation signal
//! through the level vector `g` with noise intensity `sigma0`.
//!
//! Once the Wonham filter delivers a conditional distribution `p` over
//! regimes, the wealth equation closes over the *filtered* coefficients
//!
//! ```text
//! r_hat(t, p)      = sum_i r(t, i) p_i
//! B_hat_l(t, p)    = sum_i (b_l(t, i) - r(t, i)) p_i
//! sigma_hat_lj(t,p)= sum_i sigma_bar[l][j](t, i) p_i
//! ```
//!
//! giving drift `r_hat x + B_hat . u` and diffusion row `u' sigma_hat`. These
//! are deliberately evaluated with `p` exactly as given — no renormalization
//! happens here, so off-simplex evaluations (used by the full product grid)
//! mean what they say.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One coefficient affine in time: `value(t) = c0 + c1 * t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinePair {
    pub c0: f64,
    pub c1: f64,
}

impl AffinePair {
    pub const fn new(c0: f64, c1: f64) -> Self {
        Self { c0, c1 }
    }

    /// Constant-in-time coefficient.
    pub const fn constant(c: f64) -> Self {
        Self { c0: c, c1: 0.0 }
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        self.c0 + self.c1 * t
    }
}

/// Time window `[s, T]` of the control problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub s: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
}

impl Horizon {
    pub fn length(&self) -> f64 {
        self.t_end - self.s
    }
}

/// A complete market specification.
///
/// Shapes: `q` is `m x m` row-major, `g` and `r` have length `m`, `b` is
/// indexed `[stock][regime]`, and `sigma_bar` is `[stock][brownian][regime]`.
/// Validation lives in [`RegimeModel::validate`]; evaluation methods assume a
/// validated model and index unchecked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    /// Number of regimes.
    pub m: usize,
    /// Number of stocks (= number of wealth-driving Brownian motions).
    pub d: usize,
    /// Regime generator, row-major `m x m`.
    pub q: Vec<f64>,
    /// Observation levels per regime.
    pub g: Vec<f64>,
    /// Observation noise intensity.
    pub sigma0: f64,
    /// Short rate per regime.
    pub r: Vec<AffinePair>,
    /// Appreciation rate per stock and regime.
    pub b: Vec<Vec<AffinePair>>,
    /// Volatility per stock, Brownian component, and regime.
    pub sigma_bar: Vec<Vec<Vec<AffinePair>>>,
    pub horizon: Horizon,
}

/// Filtered (p-averaged) coefficients at a fixed `(t, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredCoefficients {
    pub r_hat: f64,
    /// Excess appreciation per stock, `B_hat[l]`.
    pub b_hat: Vec<f64>,
    /// Row-major `d x d` filtered volatility, entry `[l * d + j]`.
    pub sigma_hat: Vec<f64>,
}

impl FilteredCoefficients {
    #[inline]
    pub fn sigma_hat_at(&self, l: usize, j: usize, d: usize) -> f64 {
        self.sigma_hat[l * d + j]
    }
}

impl RegimeModel {
    /// Load a model from a JSON document.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::ModelLoad {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let model: RegimeModel = serde_json::from_str(&text).map_err(|e| Error::ModelLoad {
            path: path.display().to_string(),
            // serde_json reports line/column of the offending token.
            reason: e.to_string(),
        })?;
        Ok(model)
    }

    /// Generator entry `q[from][to]`.
    #[inline]
    pub fn q_at(&self, from: usize, to: usize) -> f64 {
        self.q[from * self.m + to]
    }

    #[inline]
    pub fn rate(&self, t: f64, regime: usize) -> f64 {
        self.r[regime].at(t)
    }

    #[inline]
    pub fn appreciation(&self, stock: usize, t: f64, regime: usize) -> f64 {
        self.b[stock][regime].at(t)
    }

    #[inline]
    pub fn volatility(&self, stock: usize, brownian: usize, t: f64, regime: usize) -> f64 {
        self.sigma_bar[stock][brownian][regime].at(t)
    }

    /// Structural validation. Returns every violation found, so a bad file is
    /// diagnosed in one pass; an empty vector means the model is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let m = self.m;
        let d = self.d;
        if m == 0 {
            errs.push("m must be at least 1".to_string());
        }
        if d == 0 {
            errs.push("d must be at least 1".to_string());
        }
        if self.q.len() != m * m {
            errs.push(format!(
                "Q must be m*m = {} entries (row-major), got {}",
                m * m,
                self.q.len()
            ));
        }
        if self.g.len() != m {
            errs.push(format!("g must have m = {} entries, got {}", m, self.g.len()));
        }
        if self.r.len() != m {
            errs.push(format!("r must have m = {} entries, got {}", m, self.r.len()));
        }
        if self.b.len() != d {
            errs.push(format!("b must have d = {} rows, got {}", d, self.b.len()));
        } else {
            for (l, row) in self.b.iter().enumerate() {
                if row.len() != m {
                    errs.push(format!(
                        "b[{l}] must have m = {} entries, got {}",
                        m,
                        row.len()
                    ));
                }
            }
        }
        if self.sigma_bar.len() != d {
            errs.push(format!(
                "sigma_bar must have d = {} rows, got {}",
                d,
                self.sigma_bar.len()
            ));
        } else {
            for (l, plane) in self.sigma_bar.iter().enumerate() {
                if plane.len() != d {
                    errs.push(format!(
                        "sigma_bar[{l}] must have d = {} columns, got {}",
                        d,
                        plane.len()
                    ));
                } else {
                    for (j, cell) in plane.iter().enumerate() {
                        if cell.len() != m {
                            errs.push(format!(
                                "sigma_bar[{l}][{j}] must have m = {} entries, got {}",
                                m,
                                cell.len()
                            ));
                        }
                    }
                }
            }
        }
        // Generator structure: nonnegative off-diagonal, rows sum to zero.
        if self.q.len() == m * m {
            for i in 0..m {
                let mut row_sum = 0.0;
                for j in 0..m {
                    let v = self.q_at(i, j);
                    row_sum += v;
                    if i != j && v < 0.0 {
                        errs.push(format!("Q[{i}][{j}] = {v} is negative off the diagonal"));
                    }
                }
                if row_sum.abs() > 1e-12 {
                    errs.push(format!("Q row {i} sums to {row_sum}, must be 0 within 1e-12"));
                }
            }
        }
        if !(self.sigma0 > 0.0) || !self.sigma0.is_finite() {
            errs.push(format!(
                "sigma0 = {} must be positive and finite",
                self.sigma0
            ));
        }
        if !(self.horizon.s < self.horizon.t_end) {
            errs.push(format!(
                "horizon must satisfy s < T, got s = {}, T = {}",
                self.horizon.s, self.horizon.t_end
            ));
        }
        // Affine r is nonnegative on [s, T] iff it is nonnegative at both ends.
        if self.r.len() == m {
            for (i, pair) in self.r.iter().enumerate() {
                for t in [self.horizon.s, self.horizon.t_end] {
                    let v = pair.at(t);
                    if v < 0.0 {
                        errs.push(format!("r[{i}] = {v} is negative at t = {t}"));
                    }
                }
            }
        }
        errs
    }

    /// [`RegimeModel::validate`] promoted to an error.
    pub fn validated(self) -> Result<Self> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(errs))
        }
    }

    /// Filtered coefficients at `(t, p)`. `p` is used exactly as given.
    pub fn filtered_coefficients(&self, t: f64, p: &[f64]) -> Result<FilteredCoefficients> {
        if p.len() != self.m {
            return Err(Error::Dimension {
                context: "filtered_coefficients: p",
                expected: self.m,
                got: p.len(),
            });
        }
        let mut r_hat = 0.0;
        for i in 0..self.m {
            r_hat += self.rate(t, i) * p[i];
        }
        let mut b_hat = vec![0.0; self.d];
        for l in 0..self.d {
            let mut acc = 0.0;
            for i in 0..self.m {
                acc += (self.appreciation(l, t, i) - self.rate(t, i)) * p[i];
            }
            b_hat[l] = acc;
        }
        let mut sigma_hat = vec![0.0; self.d * self.d];
        for l in 0..self.d {
            for j in 0..self.d {
                let mut acc = 0.0;
                for i in 0..self.m {
                    acc += self.volatility(l, j, t, i) * p[i];
                }
                sigma_hat[l * self.d + j] = acc;
            }
        }
        Ok(FilteredCoefficients {
            r_hat,
            b_hat,
            sigma_hat,
        })
    }

    /// Wealth drift `r_hat x + B_hat . u` under the filtered coefficients.
    pub fn drift(&self, t: f64, x: f64, p: &[f64], u: &[f64]) -> Result<f64> {
        if u.len() != self.d {
            return Err(Error::Dimension {
                context: "drift: u",
                expected: self.d,
                got: u.len(),
            });
        }
        let fc = self.filtered_coefficients(t, p)?;
        let mut acc = fc.r_hat * x;
        for l in 0..self.d {
            acc += fc.b_hat[l] * u[l];
        }
        Ok(acc)
    }

    /// Diffusion row `sigma_j = sum_l u_l sigma_hat[l][j]` and its squared
    /// norm `a = sigma sigma'` (the infinitesimal variance of wealth).
    pub fn diffusion(&self, t: f64, p: &[f64], u: &[f64]) -> Result<(Vec<f64>, f64)> {
        if u.len() != self.d {
            return Err(Error::Dimension {
                context: "diffusion: u",
                expected: self.d,
                got: u.len(),
            });
        }
        let fc = self.filtered_coefficients(t, p)?;
        let mut row = vec![0.0; self.d];
        let mut a = 0.0;
        for j in 0..self.d {
            let mut sj = 0.0;
            for l in 0..self.d {
                sj += u[l] * fc.sigma_hat_at(l, j, self.d);
            }
            row[j] = sj;
            a += sj * sj;
        }
        Ok((row, a))
    }

    /// Hex SHA-256 of the canonical JSON serialization; recorded in result
    /// metadata so outputs can be traced back to the exact model they used.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let out = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in out {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

/// Finite set of admissible portfolio vectors, ordered lexicographically so
/// argmin ties resolve toward the smallest control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    d: usize,
    points: Vec<Vec<f64>>,
}

impl ControlSet {
    /// Uniform product grid over the box `[lo, hi]^d` with `n[k]` points on
    /// axis `k`. A single-point axis (`n = 1`) pins that coordinate at `lo`.
    pub fn box_grid(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        let d = lo.len();
        if hi.len() != d {
            return Err(Error::Dimension {
                context: "control box: hi",
                expected: d,
                got: hi.len(),
            });
        }
        if n.len() != d {
            return Err(Error::Dimension {
                context: "control box: n",
                expected: d,
                got: n.len(),
            });
        }
        for k in 0..d {
            if n[k] == 0 {
                return Err(Error::InvalidGrid(format!(
                    "control axis {k} must have at least one point"
                )));
            }
            if !(lo[k] <= hi[k]) {
                return Err(Error::InvalidGrid(format!(
                    "control axis {k} has lo = {} > hi = {}",
                    lo[k], hi[k]
                )));
            }
        }
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                if n[k] == 1 {
                    vec![lo[k]]
                } else {
                    let step = (hi[k] - lo[k]) / (n[k] - 1) as f64;
                    (0..n[k]).map(|idx| lo[k] + step * idx as f64).collect()
                }
            })
            .collect();
        // Odometer with axis 0 slowest keeps the points lexicographically
        // sorted, which is what the tie-breaking rule relies on.
        let total: usize = n.iter().product();
        let mut points = Vec::with_capacity(total);
        let mut digits = vec![0usize; d];
        for _ in 0..total {
            points.push((0..d).map(|k| axes[k][digits[k]]).collect());
            for k in (0..d).rev() {
                digits[k] += 1;
                if digits[k] < n[k] {
                    break;
                }
                digits[k] = 0;
            }
        }
        Ok(Self { d, points })
    }

    /// One-dimensional grid of `n` controls on `[lo, hi]`.
    pub fn scalar(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::box_grid(&[lo], &[hi], &[n])
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let d = points.first().map(|p| p.len()).unwrap_or(0);
        if d == 0 {
            return Err(Error::InvalidGrid(
                "control set must contain at least one nonempty point".into(),
            ));
        }
        for (idx, pt) in points.iter().enumerate() {
            if pt.len() != d {
                return Err(Error::Dimension {
                    context: "control set point",
                    expected: d,
                    got: points[idx].len(),
                });
            }
        }
        Ok(Self { d, points })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.as_slice())
    }
}

/// Everything the backward solver needs besides the model and the grid:
/// the multiplier, the target mean, and the admissible controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Lagrange multiplier of the mean constraint.
    pub lambda: f64,
    /// Target terminal mean.
    pub kappa: f64,
    pub control_set: ControlSet,
}

pub mod presets {
    //! Ready-made models used by the documentation, tests, and the bundled
    //! run configuration.

    use super::*;

    /// A small two-regime, single-stock market.
    ///
    /// Regime 0 is the calm state, regime 1 the excited one: the short rate is
    /// `t + 1` resp. `t + 2`, the stock appreciation `t` resp. `t - 1`, the
    /// volatility `1` resp. `2`, and the regime signal has levels `(2, 3)`
    /// with unit observation noise. The regimes swap at rate `1/2` in both
    /// directions. Horizon `[0, 0.6]`.
    pub fn two_regime_market() -> RegimeModel {
        RegimeModel {
            m: 2,
            d: 1,
            q: vec![-0.5, 0.5, 0.5, -0.5],
            g: vec![2.0, 3.0],
            sigma0: 1.0,
            r: vec![AffinePair::new(1.0, 1.0), AffinePair::new(2.0, 1.0)],
            b: vec![vec![AffinePair::new(0.0, 1.0), AffinePair::new(-1.0, 1.0)]],
            sigma_bar: vec![vec![vec![
                AffinePair::constant(1.0),
                AffinePair::constant(2.0),
            ]]],
            horizon: Horizon { s: 0.0, t_end: 0.6 },
        }
    }

    /// Single-regime market with constant coefficients: geometric dynamics
    /// with rate `r`, excess appreciation `mu - r`, and volatility `sigma`.
    /// The filter is trivial for this model (`p = (1)` forever), which makes
    /// it the workhorse for solver-level oracle tests.
    pub fn single_regime_market(r: f64, mu: f64, sigma: f64, horizon: Horizon) -> RegimeModel {
        RegimeModel {
            m: 1,
            d: 1,
            q: vec![0.0],
            g: vec![1.0],
            sigma0: 1.0,
            r: vec![AffinePair::constant(r)],
            b: vec![vec![AffinePair::constant(mu)]],
            sigma_bar: vec![vec![vec![AffinePair::constant(sigma)]]],
            horizon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_regime_preset_is_valid() {
        assert!(two_regime_market().validate().is_empty());
    }

    #[test]
    fn generator_rows_must_sum_to_zero() {
        let mut model = two_regime_market();
        model.q = vec![-1.0, 0.5, 0.5, -1.0];
        let errs = model.validate();
        // Both bad rows are named, not just the first.
        assert!(errs.iter().any(|e| e.contains("row 0")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("row 1")), "{errs:?}");
    }

    #[test]
    fn negative_off_diagonal_rejected() {
        let mut model = two_regime_market();
        model.q = vec![0.5, -0.5, 0.5, -0.5];
        let errs = model.validate();
        assert!(errs.iter().any(|e| e.contains("negative off the diagonal")));
    }

    #[test]
    fn zero_generator_is_valid() {
        let mut model = two_regime_market();
        model.q = vec![0.0, 0.0, 0.0, 0.0];
        assert!(model.validate().is_empty());
    }

    #[test]
    fn nonpositive_sigma0_rejected() {
        let mut model = two_regime_market();
        model.sigma0 = 0.0;
        assert!(model.validate().iter().any(|e| e.contains("sigma0")));
    }

    #[test]
    fn negative_rate_caught_at_horizon_endpoint() {
        let mut model = two_regime_market();
        // r(t) = t - 2 is negative at t = 0; the endpoint check must see it.
        model.r[0] = AffinePair::new(-2.0, 1.0);
        let errs = model.validate();
        assert!(errs.iter().any(|e| e.contains("r[0]") && e.contains("t = 0")));
    }

    #[test]
    fn shape_violations_reported() {
        let mut model = two_regime_market();
        model.q = vec![-0.5, 0.5, 0.0, 0.5, -0.5, 0.0]; // 2x3
        let errs = model.validate();
        assert!(errs.iter().any(|e| e.contains("Q must be m*m")));

        let mut model = two_regime_market();
        model.g = vec![2.0];
        assert!(model.validate().iter().any(|e| e.contains("g must have")));
    }

    /// Independent evaluation of the filtered coefficients at t = 0,
    /// p = (1/2, 1/2): r_hat = (1 + 2)/2, B_hat = ((0-1) + (-1-2))/2,
    /// sigma_hat = (1 + 2)/2.
    #[test]
    fn filtered_coefficients_at_reference_node() {
        let model = two_regime_market();
        let fc = model.filtered_coefficients(0.0, &[0.5, 0.5]).unwrap();
        assert_relative_eq!(fc.r_hat, 1.5, epsilon = 1e-15);
        assert_relative_eq!(fc.b_hat[0], -2.0, epsilon = 1e-15);
        assert_relative_eq!(fc.sigma_hat[0], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn drift_at_reference_node() {
        let model = two_regime_market();
        // r_hat * x + B_hat * u = 1.5 * 1 + (-2) * 0.5
        let b = model.drift(0.0, 1.0, &[0.5, 0.5], &[0.5]).unwrap();
        assert_relative_eq!(b, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn drift_with_zero_control_is_rate_times_wealth() {
        let model = two_regime_market();
        let p = [0.3, 0.7];
        let fc = model.filtered_coefficients(0.2, &p).unwrap();
        let b = model.drift(0.2, 1.7, &p, &[0.0]).unwrap();
        assert_relative_eq!(b, fc.r_hat * 1.7, epsilon = 1e-15);
    }

    #[test]
    fn diffusion_at_reference_node() {
        let model = two_regime_market();
        let (row, a) = model.diffusion(0.0, &[0.5, 0.5], &[1.0]).unwrap();
        assert_relative_eq!(row[0], 1.5, epsilon = 1e-15);
        assert_relative_eq!(a, 2.25, epsilon = 1e-15);
    }

    #[test]
    fn diffusion_vanishes_at_zero_control() {
        let model = two_regime_market();
        let (row, a) = model.diffusion(0.3, &[0.25, 0.75], &[0.0]).unwrap();
        assert_eq!(row[0], 0.0);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn dimension_mismatches_are_errors() {
        let model = two_regime_market();
        assert!(model.filtered_coefficients(0.0, &[1.0]).is_err());
        assert!(model.drift(0.0, 1.0, &[0.5, 0.5], &[0.1, 0.2]).is_err());
        assert!(model.diffusion(0.0, &[0.5, 0.5], &[]).is_err());
    }

    #[test]
    fn json_roundtrip_preserves_model() {
        let model = two_regime_market();
        let text = serde_json::to_string(&model).unwrap();
        let back: RegimeModel = serde_json::from_str(&text).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn load_reports_path_and_reason() {
        let err = RegimeModel::load("/nonexistent/model.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("/nonexistent/model.json"), "{msg}");

        let dir = std::env::temp_dir().join("mvregime-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("broken.json");
        std::fs::write(&path, "{\"m\": 2, ").unwrap();
        let err = RegimeModel::load(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("broken.json"), "{msg}");
        // serde_json includes the position of the parse failure.
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn control_box_is_lexicographically_sorted() {
        let set = ControlSet::box_grid(&[-1.0, 0.0], &[1.0, 1.0], &[3, 2]).unwrap();
        assert_eq!(set.len(), 6);
        let pts: Vec<&[f64]> = set.iter().collect();
        assert_eq!(pts[0], &[-1.0, 0.0][..]);
        assert_eq!(pts[1], &[-1.0, 1.0][..]);
        assert_eq!(pts[2], &[0.0, 0.0][..]);
        assert_eq!(pts[5], &[1.0, 1.0][..]);
        for w in pts.windows(2) {
            assert!(w[0] < w[1], "not sorted: {:?} vs {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn scalar_control_grid_endpoints_exact() {
        let set = ControlSet::scalar(-2.0, 2.0, 41).unwrap();
        assert_eq!(set.len(), 41);
        assert_eq!(set.point(0)[0], -2.0);
        assert_eq!(set.point(40)[0], 2.0);
        assert_relative_eq!(set.point(20)[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_control_boxes_rejected() {
        assert!(ControlSet::box_grid(&[0.0], &[1.0], &[0]).is_err());
        assert!(ControlSet::box_grid(&[1.0], &[0.0], &[3]).is_err());
        assert!(ControlSet::from_points(vec![]).is_err());
        assert!(ControlSet::from_points(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    /// The filtered coefficients must be linear in p with no hidden
    /// renormalization: f(a p + b q) = a f(p) + b f(q) exactly (up to
    /// rounding), including off the simplex.
    #[test]
    fn filtered_coefficients_linear_in_p() {
        let model = two_regime_market();
        let p = [0.3, 0.9];
        let q = [0.4, 0.1];
        let (a, b) = (0.7, 1.9);
        let combo: Vec<f64> = (0..2).map(|i| a * p[i] + b * q[i]).collect();
        let fp = model.filtered_coefficients(0.37, &p).unwrap();
        let fq = model.filtered_coefficients(0.37, &q).unwrap();
        let fc = model.filtered_coefficients(0.37, &combo).unwrap();
        assert_relative_eq!(fc.r_hat, a * fp.r_hat + b * fq.r_hat, epsilon = 1e-12);
        assert_relative_eq!(
            fc.b_hat[0],
            a * fp.b_hat[0] + b * fq.b_hat[0],
            epsilon = 1e-12
        );
        assert_relative_eq!(
            fc.sigma_hat[0],
            a * fp.sigma_hat[0] + b * fq.sigma_hat[0],
            epsilon = 1e-12
        );
    }

    #[test]
    fn digest_is_stable_and_distinguishes_models() {
        let a = two_regime_market();
        let b = two_regime_market();
        assert_eq!(a.digest(), b.digest());
        let mut c = two_regime_market();
        c.sigma0 = 2.0;
        assert_ne!(a.digest(), c.digest());
    }
}
