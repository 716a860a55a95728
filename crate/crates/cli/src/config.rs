//! Run configuration: a JSON document whose fields individual command-line
//! flags may override. Nothing here computes; validation collects every
//! violation it can find so a bad file is fixed in one round trip.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mvregime::chain::GridSpec;
use mvregime::model::{ControlSet, RegimeModel};
use mvregime::solver::{LambdaSearch, SearchMethod};
use serde::{Deserialize, Serialize};

/// A scalar that may also be written per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OnePerAxis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> OnePerAxis<T> {
    /// Expand to `d` entries; a single value is broadcast.
    fn expand(&self, d: usize) -> Option<Vec<T>> {
        match self {
            OnePerAxis::One(v) => Some(vec![*v; d]),
            OnePerAxis::Many(vs) if vs.len() == d => Some(vs.clone()),
            OnePerAxis::Many(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub h1: Option<f64>,
    pub h2: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub min: Option<OnePerAxis<f64>>,
    pub max: Option<OnePerAxis<f64>>,
    pub count: Option<OnePerAxis<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl KappaRange {
    /// The targets `start, start + step, ...` up to `stop` inclusive
    /// (within a rounding slack of one part in 10^9 of a step).
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let v = self.start + f64::from(k) * self.step;
            if v > self.stop + 1e-9 * self.step {
                break;
            }
            out.push(v);
            k += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub lambda: Option<f64>,
    pub kappa: Option<f64>,
    /// Search bracket for the multiplier, `[lo, hi]`.
    pub lambda_bracket: Option<[f64; 2]>,
    pub kappa_range: Option<KappaRange>,
    pub search_method: Option<SearchMethod>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub x0: Option<f64>,
    /// Initial regime distribution; defaults to uniform over the model's
    /// regimes.
    pub p0: Option<Vec<f64>>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
}

/// Everything a run needs, with optional fields so a config file may state
/// only what it uses and flags may fill the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Path to the model JSON, resolved relative to the config file when
    /// the config supplies it.
    pub model: Option<PathBuf>,
    pub grid: GridSection,
    pub controls: ControlSection,
    pub solver: SolverSection,
    pub simulation: SimulationSection,
    /// Output directory; defaults to `out`.
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        // A model path in the file is relative to the file, not to wherever
        // the binary happens to run.
        if let (Some(model), Some(dir)) = (&config.model, path.parent()) {
            if model.is_relative() && !dir.as_os_str().is_empty() {
                config.model = Some(dir.join(model));
            }
        }
        Ok(config)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Load and validate the model, reporting every model-level violation.
    pub fn load_model(&self) -> Result<RegimeModel> {
        let path = self
            .model
            .as_ref()
            .context("no model file given (--model or \"model\" in the config)")?;
        if !path.exists() {
            anyhow::bail!("model file not found: {}", path.display());
        }
        let model = RegimeModel::load(path)
            .with_context(|| format!("cannot load model {}", path.display()))?;
        let violations = model.validate();
        if !violations.is_empty() {
            anyhow::bail!(
                "model {} is invalid:\n  - {}",
                path.display(),
                violations.join("\n  - ")
            );
        }
        Ok(model)
    }

    /// Collect every grid-field violation without touching the model.
    pub fn grid_violations(&self, errors: &mut Vec<String>) {
        let g = &self.grid;
        match g.h1 {
            None => errors.push("grid.h1 missing (--grid-h1)".into()),
            Some(h1) if !(h1 > 0.0 && h1.is_finite()) => {
                errors.push(format!("grid.h1 = {h1} must be positive and finite"));
            }
            _ => {}
        }
        match g.h2 {
            None => errors.push("grid.h2 missing (--grid-h2)".into()),
            Some(h2) if !(h2 > 0.0 && h2.is_finite()) => {
                errors.push(format!("grid.h2 = {h2} must be positive and finite"));
            }
            _ => {}
        }
        match (g.x_min, g.x_max) {
            (None, _) => errors.push("grid.x_min missing (--x-min)".into()),
            (_, None) => errors.push("grid.x_max missing (--x-max)".into()),
            (Some(lo), Some(hi)) if !(lo < hi) => {
                errors.push(format!("grid x range [{lo}, {hi}] is empty"));
            }
            _ => {}
        }
    }

    pub fn grid_spec(&self, model: &RegimeModel) -> Result<GridSpec> {
        let g = &self.grid;
        GridSpec::new(
            model,
            g.h1.context("grid.h1 missing")?,
            g.h2.context("grid.h2 missing")?,
            g.x_min.context("grid.x_min missing")?,
            g.x_max.context("grid.x_max missing")?,
            None,
        )
        .map_err(Into::into)
    }

    pub fn control_violations(&self, d: usize, errors: &mut Vec<String>) {
        let c = &self.controls;
        let (mut lo, mut hi, mut n) = (None, None, None);
        match &c.min {
            None => errors.push("controls.min missing".into()),
            Some(v) => match v.expand(d) {
                None => errors.push(format!("controls.min needs one value or {d}")),
                some => lo = some,
            },
        }
        match &c.max {
            None => errors.push("controls.max missing".into()),
            Some(v) => match v.expand(d) {
                None => errors.push(format!("controls.max needs one value or {d}")),
                some => hi = some,
            },
        }
        match &c.count {
            None => errors.push("controls.count missing".into()),
            Some(v) => match v.expand(d) {
                None => errors.push(format!("controls.count needs one value or {d}")),
                some => n = some,
            },
        }
        if let (Some(lo), Some(hi), Some(n)) = (lo, hi, n) {
            for l in 0..d {
                if !(lo[l] <= hi[l]) {
                    errors.push(format!(
                        "controls axis {l}: min {} exceeds max {}",
                        lo[l], hi[l]
                    ));
                }
                if n[l] == 0 {
                    errors.push(format!("controls axis {l}: count must be positive"));
                }
            }
        }
    }

    pub fn control_set(&self, d: usize) -> Result<ControlSet> {
        let c = &self.controls;
        let expand_err = || anyhow::anyhow!("controls section incomplete for {d} axes");
        let lo = c
            .min
            .as_ref()
            .and_then(|v| v.expand(d))
            .ok_or_else(expand_err)?;
        let hi = c
            .max
            .as_ref()
            .and_then(|v| v.expand(d))
            .ok_or_else(expand_err)?;
        let n = c
            .count
            .as_ref()
            .and_then(|v| v.expand(d))
            .ok_or_else(expand_err)?;
        ControlSet::box_grid(&lo, &hi, &n).map_err(Into::into)
    }

    pub fn lambda_search(&self) -> LambdaSearch {
        let mut search = LambdaSearch::default();
        if let Some([lo, hi]) = self.solver.lambda_bracket {
            search.bracket = (lo, hi);
        }
        if let Some(method) = self.solver.search_method {
            search.method = method;
        }
        search
    }

    pub fn x0(&self) -> f64 {
        self.simulation.x0.unwrap_or(1.0)
    }

    pub fn p0(&self, m: usize) -> Vec<f64> {
        self.simulation
            .p0
            .clone()
            .unwrap_or_else(|| vec![1.0 / m as f64; m])
    }

    pub fn n_paths(&self) -> usize {
        self.simulation.n_paths.unwrap_or(10_000)
    }

    pub fn seed(&self) -> u64 {
        self.simulation.seed.unwrap_or(2024)
    }

    pub fn simulation_violations(&self, m: usize, errors: &mut Vec<String>) {
        if self.n_paths() == 0 {
            errors.push("simulation.n_paths must be positive".into());
        }
        if let Some(x0) = self.simulation.x0 {
            if !x0.is_finite() {
                errors.push(format!("simulation.x0 = {x0} must be finite"));
            }
        }
        if let Some(p0) = &self.simulation.p0 {
            if p0.len() != m {
                errors.push(format!(
                    "simulation.p0 has {} entries, model has {m} regimes",
                    p0.len()
                ));
            } else {
                if p0.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    errors.push("simulation.p0 entries must lie in [0, 1]".into());
                }
                let sum: f64 = p0.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    errors.push(format!("simulation.p0 sums to {sum}, expected 1"));
                }
            }
        }
        if let Some([lo, hi]) = self.solver.lambda_bracket {
            if !(lo < hi) {
                errors.push(format!("solver.lambda_bracket [{lo}, {hi}] is empty"));
            }
        }
    }

    /// One stable hash over the resolved configuration, recorded in every
    /// summary so an artifact can be traced to the inputs that produced it.
    pub fn content_hash(&self, subcommand: &str) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(subcommand.as_bytes());
        hasher.update(b":");
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// Fail with one message listing every violation found so far.
pub fn reject_if_invalid(errors: Vec<String>) -> Result<()> {
    if errors.is_empty() {
        Ok(())
    } else {
        anyhow::bail!("invalid configuration:\n  - {}", errors.join("\n  - "))
    }
}
