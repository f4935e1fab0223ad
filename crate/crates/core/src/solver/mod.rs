//! Dense LP and MILP solvers used by the dispatch models.
//!
//! [`lp::solve_lp`] is a two-phase, bounded-variable primal simplex on a dense
//! tableau. [`milp::solve_milp`] runs best-bound branch-and-bound over it for
//! problems with binary columns. Both are pure functions over their inputs.

pub mod dump;
pub mod lp;
pub mod milp;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lp::{solve_lp, ConstraintSense, LinearProgram, LpSolution, LpStatus};
pub use milp::{solve_milp, MilpSolution, MilpStatus, MixedIntegerProgram, NodeRecord};

/// Numerical and budget settings shared by the LP and MILP solvers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Absolute primal feasibility tolerance on row-normalized data.
    pub feas_tol: f64,
    /// Reduced-cost tolerance for optimality.
    pub opt_tol: f64,
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tol: f64,
    /// Simplex iteration cap; `None` picks a size-dependent default.
    pub max_iterations: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_streak: usize,
    /// Relative optimality gap for branch-and-bound.
    pub gap_tol: f64,
    /// Distance from 0/1 under which a binary counts as integral.
    pub int_tol: f64,
    /// Branch-and-bound node budget.
    pub node_limit: usize,
    /// Optional wall-clock budget per MILP solve.
    pub time_limit: Option<Duration>,
    /// Keep a per-node log in the MILP solution (for diagnostics and tests).
    pub record_nodes: bool,
    /// Run a fractional dive from the root to find an early incumbent.
    pub dive: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            opt_tol: 1e-7,
            pivot_tol: 1e-9,
            max_iterations: None,
            degenerate_streak: 50,
            gap_tol: 1e-6,
            int_tol: 1e-6,
            node_limit: 1_000_000,
            time_limit: None,
            record_nodes: false,
            dive: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid bounds on column {column}: [{lower}, {upper}]")]
    InvalidBounds { column: usize, lower: f64, upper: f64 },
    #[error("non-finite coefficient: {0}")]
    NonFinite(String),
    #[error("simplex iteration limit ({0}) exceeded")]
    IterationLimit(usize),
    #[error("node limit reached after {nodes} nodes without an incumbent")]
    NodeLimit { nodes: usize },
    #[error("LP relaxation is unbounded")]
    UnboundedRelaxation,
}
