//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model document failed structural validation. Each entry names one
    /// violation; they are collected so a bad file is reported in full rather
    /// than one complaint at a time.
    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    /// A model file could not be read or parsed. The message includes the
    /// offending JSON path when deserialization fails partway in.
    #[error("cannot load model from {path}: {reason}")]
    ModelLoad { path: String, reason: String },

    /// Grid geometry that violates a divisibility or ordering requirement.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Mismatched vector dimensions at an API boundary.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The plain filter step was fed a distribution with a nonpositive
    /// component; only the penalized step is defined there.
    #[error("filter state has nonpositive p[{index}] = {value}; use the penalized step")]
    NonpositiveProbability { index: usize, value: f64 },

    /// A non-finite number appeared where the scheme requires a finite one.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Backward iteration produced a non-finite value at a specific node; the
    /// location is reported because it usually points at bad coefficients or
    /// a CFL violation.
    #[error(
        "value iteration produced a non-finite value at layer {layer}, x-node {x_index}, \
         p-node {p_index}"
    )]
    NanAtNode {
        layer: usize,
        x_index: usize,
        p_index: usize,
    },

    /// The grid and control set fail the stability scan, so the transition
    /// coefficients would not form probabilities. The worst offender is
    /// named; the `check` subcommand prints the full report.
    #[error(
        "grid fails the stability scan: max transition coefficient {max_coefficient} > 1 \
         at layer {layer}, x-node {x_index}, p-node {p_index}; refine h2 (or coarsen h1) \
         and rerun the check for the full report"
    )]
    CflFailed {
        max_coefficient: f64,
        layer: usize,
        x_index: usize,
        p_index: usize,
    },

    /// The dual appears monotone on the multiplier bracket even after the one
    /// automatic widening, so no interior maximizer exists to report.
    #[error(
        "no interior maximizer for the multiplier in [{lo}, {hi}] (dual looks monotone); \
         widen the bracket or check that the target mean is attainable"
    )]
    NoInteriorMaximizer { lo: f64, hi: f64 },

    /// Requested point lies outside the grid by more than a rounding margin.
    #[error("point {value} is off the grid for {context}")]
    OffGrid { context: &'static str, value: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
