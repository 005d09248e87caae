//! Dense primal-dual interior-point solver for linear and semidefinite
//! programs.
//!
//! The engine works on a standard conic form
//!
//! ```text
//!   minimize    <c, x>
//!   subject to  A x = b,   x in K
//! ```
//!
//! where `K` is a product of a nonnegative orthant and dense symmetric
//! positive-semidefinite blocks. Problems are solved through a homogeneous
//! self-dual embedding, so infeasible and unbounded instances are detected
//! with certificates rather than by divergence heuristics.
//!
//! Two front ends are provided:
//!
//! * [`lp::LinearProgram`] — linear programs with per-variable bounds,
//! * [`sdp::SemidefiniteProgram`] — linear objectives/constraints over PSD
//!   matrix variables, optionally mixed with scalar variables.
//!
//! Everything is deterministic: identical inputs produce identical iterates,
//! bit for bit, on a given platform.

pub mod dense;
pub mod hermitian;
mod hsd;
pub mod lp;
mod problem;
pub mod sdp;

pub use lp::{Cmp, LinearProgram, LpSolution};
pub use sdp::{LinExpr, ScalarKind, SdpSolution, SemidefiniteProgram};

use thiserror::Error;

/// Optimization direction for the user-facing front ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Optimal within tolerances; both primal and dual solutions are valid.
    Optimal,
    /// No feasible point exists. A Farkas certificate is attached where the
    /// front end supports one.
    PrimalInfeasible,
    /// The objective is unbounded in the optimization direction (equivalently
    /// the dual problem is infeasible). An improving ray is attached where
    /// the front end supports one.
    DualInfeasible,
}

/// Tunable solver parameters. The defaults are appropriate for
/// well-conditioned problems with coefficients of order one.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative primal/dual feasibility tolerance.
    pub tol_feas: f64,
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    /// Acceptance tolerance for infeasibility certificates.
    pub tol_infeas: f64,
    /// Iteration budget before giving up.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol_feas: 1e-10, tol_gap: 1e-10, tol_infeas: 1e-9, max_iter: 200 }
    }
}

/// Numerical summary of a finished solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    /// Objective value of the returned primal point (standard-form sign).
    pub primal_objective: f64,
    /// Objective value of the returned dual point (standard-form sign).
    pub dual_objective: f64,
    /// `|p - d| / (1 + max(|p|, |d|))`.
    pub relative_gap: f64,
    /// Relative infinity-norm of the primal equality residual.
    pub primal_residual: f64,
    /// Relative infinity-norm of the dual equality residual.
    pub dual_residual: f64,
    /// Largest diagonal shift added during factorization, zero if none.
    pub regularization: f64,
    /// Final complementarity measure.
    pub mu: f64,
}

/// Failure modes of the engine.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("no verdict after {iterations} iterations (best residual {best_quality:.3e})")]
    MaxIterations { iterations: usize, best_quality: f64 },
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

pub(crate) use hsd::solve_standard;
