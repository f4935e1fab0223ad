//! Forecast-then-optimize with a learned decision-objective loss.

pub mod adol;
pub mod data_io;
pub mod dispatch;
pub mod evalkit;
pub mod forecast;
pub mod neural;
pub mod solver;
