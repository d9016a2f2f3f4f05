//! Two-stage maximum score (TSMS) estimation toolkit.
//!
//! The library implements the classic maximum score criterion for binary
//! choice, its smoothed variant, and two-stage variants in which a
//! nonparametric first-stage regression replaces the raw outcomes, both for
//! the single-index binary choice model and for monotone multi-index models
//! with single-crossing structure. Around the estimators it provides:
//!
//! - sphere geometry primitives (sampling, grids, tangent projection,
//!   orthonormal change of basis),
//! - data-generating processes on the unit ball with analytic regression
//!   functions for testing,
//! - a Nadaraya-Watson kernel first stage with known-density and
//!   estimated-density evaluation,
//! - global criterion maximizers over the unit sphere (an exact arrangement
//!   solver in two dimensions, grid search with local refinement in general),
//! - a symbolic convergence-rate calculus for bandwidth rules and rate
//!   regimes,
//! - a deterministic Monte Carlo harness for rate recovery, distributional
//!   diagnostics, and empirical-process probes.

pub mod criteria;
pub mod dgp;
pub mod error;
pub mod experiments;
pub mod firststage;
pub mod geometry;
pub mod io;
pub mod optimizer;
pub mod rates;

pub use error::{Error, Result};
pub use geometry::Direction;
