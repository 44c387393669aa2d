//! GNSS attitude determination from ambiguous carrier-phase observations.
//!
//! The core estimator treats the platform rotation as the only unknown: the
//! integer carrier-phase ambiguities are eliminated by a wrap operator that
//! maps double-difference phase residuals into `(-1/2, 1/2]`, so the attitude
//! can be searched and refined directly, without a prior ambiguity-fixing
//! step. The crate provides:
//!
//! - [`obs_model`] — double-difference observation model: line-of-sight sets,
//!   design matrix, body-frame array geometry, covariance construction, and
//!   Euler/rotation conversions.
//! - [`solver`] — the constrained wrapped least-squares (C-WLS) solver:
//!   sphere-circle candidate search, single-baseline solving, multi-baseline
//!   assembly with an SVD orthogonalization step, and iterative refinement.
//! - [`reference_solvers`] — baseline estimators used for cross-checking: an oracle
//!   that knows the true integers, a brute-force constrained integer
//!   least-squares search, and an ambiguity-function grid search.
//! - [`simulator`] — synthetic constellations, epochs with known ground
//!   truth, and a Monte Carlo campaign runner.
//! - [`io`] — epoch file format, campaign configuration, and report output.

pub mod error;
pub mod io;
pub mod obs_model;
pub mod reference_solvers;
pub mod selftest;
pub mod simulator;
pub mod solver;
pub mod stats;

pub use error::Error;
pub use obs_model::{ArrayGeometry, Attitude, DdEpoch, DesignMatrix, LosSet};
pub use solver::{
    solve_multi_baseline, solve_single_baseline, wrap, CandidateSet, ObsMode, QMode, SolveReport,
    SolverParams,
};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
