//! Two-stage dispatch models: a day-ahead schedule against the forecast,
//! then a real-time correction against the realized load.
//!
//! Both cases implement [`TwoStageModel`], which is what sampling, labeling,
//! the decision-loss baseline and evaluation are written against.

pub mod case1;
pub mod case2;
pub mod network;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::SolverError;

pub use case1::{Case1Model, Case1Params};
pub use case2::{Case2Model, Case2Params};
pub use network::NetworkSpec;

/// Realized cost of one forecast/truth pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Day-ahead cost.
    pub c1: f64,
    /// Real-time cost; negative when down-activation refunds dominate.
    pub c2: f64,
    pub total: f64,
    /// Unserved plus spilled energy in real time [MWh]; nonzero flags an abnormal scenario.
    pub shed: f64,
}

impl CostBreakdown {
    pub fn new(c1: f64, c2: f64, shed: f64) -> Self {
        Self { c1, c2, total: c1 + c2, shed }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error("capacity {capacity:.3} MW cannot cover load plus reserves {required:.3} MW")]
    InfeasibleCapacity { capacity: f64, required: f64 },
    #[error("{stage} problem is infeasible")]
    Infeasible { stage: &'static str },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// A two-stage problem whose dynamic parameters can be swapped per call.
pub trait TwoStageModel: Send + Sync {
    /// Length of the forecast vector (1 for hourly Case 1, the horizon for Case 2).
    fn forecast_dim(&self) -> usize;
    /// Nominal values of the dynamic parameter subset.
    fn nominal_params(&self) -> Vec<f64>;
    fn param_names(&self) -> Vec<String>;
    /// Solves day-ahead against `forecast` and real-time against `truth`
    /// under the dynamic parameters `params`.
    fn evaluate(&self, params: &[f64], forecast: &[f64], truth: &[f64]) -> Result<CostBreakdown, DispatchError>;
    /// Number of LP/MILP stage solves performed so far.
    fn solve_count(&self) -> u64;
}

/// Thread-safe counter of optimization solves.
#[derive(Debug, Default)]
pub struct SolveCounter(AtomicU64);

impl SolveCounter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

impl Clone for SolveCounter {
    fn clone(&self) -> Self {
        Self(AtomicU64::new(0))
    }
}

fn check_nonnegative(name: &str, values: &[f64]) -> Result<(), DispatchError> {
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(DispatchError::InvalidParams(format!("{name} contains {v}")));
    }
    Ok(())
}

fn check_len(name: &str, values: &[f64], n: usize) -> Result<(), DispatchError> {
    if values.len() != n {
        return Err(DispatchError::InvalidParams(format!("{name} has {} entries, expected {n}", values.len())));
    }
    Ok(())
}
