//! Mean-variance control of a partially observed regime-switching market.
//!
//! The market has one bond and `d` stocks whose rates, appreciation rates, and
//! volatilities are affine functions of time modulated by a continuous-time
//! Markov chain `alpha(t)` with `m` states that the investor cannot observe.
//! What the investor does observe is a scalar signal
//!
//! ```text
//! dy = g(alpha(t)) dt + sigma0 dw2,
//! ```
//!
//! from which the conditional regime distribution `p(t)` is recovered by the
//! Wonham filter. Conditioning on `p` turns the partially observed problem
//! into a fully observed one in the state `(x, p)`, where `x` is wealth; this
//! crate solves the resulting mean-variance problem
//!
//! ```text
//! minimize Var[x(T)]  subject to  E[x(T)] = kappa
//! ```
//!
//! end to end:
//!
//! * [`model`] — market primitives and the filtered drift/diffusion,
//! * [`filter`] — log-space discretization of the Wonham filter,
//! * [`chain`] — the approximating controlled Markov chain on an `(x, p)` grid,
//! * [`solver`] — backward value iteration, the Lagrange multiplier search for
//!   the mean constraint, and the efficient frontier,
//! * [`simulate`] — closed-loop Monte Carlo under the true (unfiltered)
//!   dynamics for validating extracted policies.
//!
//! All floating point state is plain `f64`; everything is deterministic given
//! a seed.

pub mod chain;
pub mod error;
pub mod filter;
pub mod model;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
