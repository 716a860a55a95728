//! On-disk artifacts: atomic writes and the summary documents the
//! subcommands exchange. Every summary carries the same provenance block;
//! the timestamp is the single field allowed to differ between reruns of an
//! identical configuration.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use mvregime::chain::GridSpec;
use mvregime::model::ControlSet;
use mvregime::simulate::McReport;
use mvregime::solver::{FrontierPoint, SweepDiagnostics};
use serde::{Deserialize, Serialize};

/// Write `bytes` to `path` via a temporary file in the same directory and a
/// rename, so a crash or a concurrent reader never observes a half-written
/// artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let name = path
        .file_name()
        .context("output path has no file name")?
        .to_string_lossy();
    let tmp = dir.join(format!(".{}.tmp-{}", name, std::process::id()));
    std::fs::write(&tmp, bytes)
        .with_context(|| format!("cannot write temporary file {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move artifact into place at {}", path.display()))?;
    Ok(())
}

pub fn atomic_write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).context("cannot serialize document")?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// Who produced an artifact, from what configuration, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Seconds since the Unix epoch; the only rerun-dependent field.
    pub generated_at_unix: u64,
    pub config_hash: String,
    pub code_version: String,
}

impl Provenance {
    pub fn now(config_hash: String) -> Self {
        let generated_at_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            generated_at_unix,
            config_hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Summary written next to `value_policy.csv`; `simulate --policy` takes
/// this file and reconstructs the policy from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub model_path: String,
    pub model_digest: String,
    pub grid: GridSpec,
    pub lambda: f64,
    pub kappa: f64,
    pub control_set: ControlSet,
    /// CSV file name, relative to this summary's directory.
    pub csv: String,
    /// Value at the start layer, nearest node to the configured `(x0, p0)`.
    pub start_value: f64,
    /// Minimum over the whole value surface; bounded below by `-lambda^2`.
    pub min_value: f64,
    pub diagnostics: SweepDiagnostics,
    pub cfl_pass: bool,
    pub max_x_coefficient: f64,
}

impl SolveSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read solve summary {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("cannot parse solve summary {}", path.display()))
    }

    /// Path of the policy CSV, anchored at the summary's own location.
    pub fn csv_path(&self, summary_path: &Path) -> PathBuf {
        match summary_path.parent() {
            Some(dir) if !dir.as_os_str().is_empty() => dir.join(&self.csv),
            _ => PathBuf::from(&self.csv),
        }
    }
}

/// Summary written next to `frontier.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub model_path: String,
    pub model_digest: String,
    pub grid: GridSpec,
    pub control_set: ControlSet,
    pub x0: f64,
    pub p0: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub lambda_bracket: [f64; 2],
    pub points: Vec<FrontierPoint>,
    /// Targets that failed, with the error text.
    pub failures: Vec<FrontierFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierFailure {
    pub kappa: f64,
    pub error: String,
}

/// Document written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub model_path: String,
    pub model_digest: String,
    pub policy_summary: String,
    pub x0: f64,
    pub p0: Vec<f64>,
    pub report: McReport,
}

/// Render the frontier as CSV, mean targets down the rows. The first two
/// columns are the frontier's own axes so the file plots directly.
pub fn frontier_csv(points: &[FrontierPoint]) -> String {
    let mut out = String::from("kappa,std_dev,lambda_star,dual_value,mc_mean,mc_variance\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.kappa, p.std_dev, p.lambda_star, p.dual_value, p.mc_mean, p.variance
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontier_csv_puts_the_plot_axes_first() {
        let point = FrontierPoint {
            kappa: 1.5,
            lambda_star: 0.25,
            dual_value: 1.0,
            mc_mean: 1.51,
            variance: 4.0,
            std_dev: 2.0,
            residual: 0.01,
            mean_ci_half_width: 0.02,
        };
        let text = frontier_csv(&[point]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "kappa,std_dev,lambda_star,dual_value,mc_mean,mc_variance"
        );
        assert_eq!(lines.next().unwrap(), "1.5,2,0.25,1,1.51,4");
    }

    #[test]
    fn atomic_write_replaces_content_without_leftovers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1, "no temporary files left behind: {names:?}");
    }

    #[test]
    fn csv_path_resolves_relative_to_the_summary() {
        let provenance = Provenance {
            generated_at_unix: 0,
            config_hash: "h".into(),
            code_version: "v".into(),
        };
        let model = mvregime::model::presets::two_regime_market();
        let grid = GridSpec::new(&model, 0.25, 0.01, 0.0, 6.0, None).unwrap();
        let summary = SolveSummary {
            provenance,
            model_path: "m.json".into(),
            model_digest: "d".into(),
            grid,
            lambda: 0.0,
            kappa: 1.0,
            control_set: ControlSet::scalar(-1.0, 1.0, 3).unwrap(),
            csv: "value_policy.csv".into(),
            start_value: 0.0,
            min_value: 0.0,
            diagnostics: SweepDiagnostics::default(),
            cfl_pass: true,
            max_x_coefficient: 0.5,
        };
        let path = summary.csv_path(Path::new("out/solve_summary.json"));
        assert_eq!(path, Path::new("out/value_policy.csv"));
    }
}
