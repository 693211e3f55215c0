//! Learns the probability distribution of solutions to random ODEs/PDEs by
//! training neural pushforward measures against physics residuals.
//!
//! A random differential equation has coefficients and data that depend on a
//! random parameter vector `ξ` with a known law. Instead of approximating one
//! solution, this crate approximates the *distribution* of solutions: a
//! parameterized map `X_θ` sends parameter samples to solution functions, and
//! the pushforward of the parameter law through `X_θ` is trained so that the
//! equation residuals vanish in mean square over both collocation points and
//! parameter draws.
//!
//! Three model families are provided:
//!
//! - [`measures::FullNnMeasure`] — a single network over `(x, t, ξ)`,
//! - [`measures::PceNnMeasure`] — a network over `(x, t)` producing
//!   polynomial-chaos coefficients in `ξ`,
//! - [`measures::GalerkinNnMeasure`] — a network over `ξ` producing
//!   coefficients of a fixed space-time basis.
//!
//! Training uses full-batch L-BFGS with a strong Wolfe line search and
//! periodic resampling of collocation points and parameter draws. Trained
//! measures are compared against independent reference solvers through
//! empirical 1-D Wasserstein distances, moment fields and histograms.
//!
//! The `examples/` directory holds one runnable example per major capability;
//! the `randpde` binary exposes `train`, `reference`, `evaluate` and `report`
//! subcommands over the same library calls.

pub mod chebyshev;
pub mod cli;
pub mod config;
pub mod domain;
pub mod lbfgs;
pub mod loss;
pub mod manifest;
pub mod measures;
pub mod metrics;
pub mod networks;
pub mod pce;
pub mod plot;
pub mod problems;
pub mod report;
pub mod train;

mod error;
mod util;

pub use error::{Error, Result};
