//! Metrics (MTDO, MAPE), the cost-increment sweep, error histograms and
//! report files.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::TIMESTAMP_FORMAT;
use crate::dispatch::{CostBreakdown, DispatchError, TwoStageModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no instances to evaluate")]
    EmptyInput,
    #[error("truth is zero at instance {0}")]
    ZeroTruth(usize),
    #[error("forecasts and truths differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mean total decision objective: average of `c1 + c2`.
pub fn mtdo(costs: &[CostBreakdown]) -> Result<f64, EvalError> {
    if costs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(costs.iter().map(|c| c.c1 + c.c2).sum::<f64>() / costs.len() as f64)
}

/// Signed percentage errors `(ŷ − y)/y · 100`.
pub fn error_percentages(forecasts: &[f64], truths: &[f64]) -> Result<Vec<f64>, EvalError> {
    if forecasts.len() != truths.len() {
        return Err(EvalError::LengthMismatch(forecasts.len(), truths.len()));
    }
    if forecasts.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    forecasts
        .iter()
        .zip(truths)
        .enumerate()
        .map(|(i, (f, y))| if *y == 0.0 { Err(EvalError::ZeroTruth(i)) } else { Ok((f - y) / y * 100.0) })
        .collect()
}

/// Mean absolute percentage error [%].
pub fn mape(forecasts: &[f64], truths: &[f64]) -> Result<f64, EvalError> {
    let e = error_percentages(forecasts, truths)?;
    Ok(e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64)
}

/// Error fractions `lo, lo+step, …, hi`, built from integer multiples of
/// `step` so that round values (0, −0.13…) are hit exactly.
pub fn error_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, EvalError> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(EvalError::InvalidGrid(format!("[{lo}, {hi}] step {step}")));
    }
    let a = (lo / step).round() as i64;
    let b = (hi / step).round() as i64;
    Ok((a..=b).map(|k| k as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Error fraction `e` with `ŷ = (1 + e)·ȳ`.
    pub error: f64,
    pub total: f64,
    /// `total − min over the grid`.
    pub increment: f64,
}

/// Realized cost of forecasting `(1 + e)·ȳ` when the truth is `ȳ`, for every
/// `e` in `grid`. Points are evaluated on the current rayon pool.
pub fn cost_increment_sweep(model: &dyn TwoStageModel, params: &[f64], typical: &[f64], grid: &[f64]) -> Result<Vec<SweepPoint>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let totals: Vec<f64> = grid
        .par_iter()
        .map(|e| {
            let f: Vec<f64> = typical.iter().map(|y| (1.0 + e) * y).collect();
            model.evaluate(params, &f, typical).map(|c| c.total)
        })
        .collect::<Result<_, _>>()?;
    let min = totals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(grid.iter().zip(totals).map(|(&error, total)| SweepPoint { error, total, increment: total - min }).collect())
}

/// First grid point attaining the minimum.
pub fn sweep_argmin(points: &[SweepPoint]) -> Option<SweepPoint> {
    points.iter().copied().reduce(|best, p| if p.total < best.total { p } else { best })
}

/// Counts of error percentages in bins of `width` centred on multiples of
/// `width`, from `−half_range` to `+half_range`. Values beyond the range land
/// in the outermost bins, so counts always sum to the number of errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub counts: Vec<usize>,
    pub width: f64,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Center of the fullest bin; ties go to the bin nearest zero.
    pub fn mode(&self) -> Option<f64> {
        let max = *self.counts.iter().max()?;
        self.centers
            .iter()
            .zip(&self.counts)
            .filter(|(_, c)| **c == max)
            .map(|(x, _)| *x)
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
    }
}

pub fn error_histogram(errors_pct: &[f64], half_range: f64, width: f64) -> Result<Histogram, EvalError> {
    if !(width > 0.0) || !(half_range >= 0.0) {
        return Err(EvalError::InvalidGrid(format!("half range {half_range}, width {width}")));
    }
    let k = (half_range / width).round() as i64;
    let centers: Vec<f64> = (-k..=k).map(|i| i as f64 * width).collect();
    let mut counts = vec![0; centers.len()];
    for e in errors_pct {
        let i = ((e / width).round() as i64).clamp(-k, k);
        counts[(i + k) as usize] += 1;
    }
    Ok(Histogram { centers, counts, width })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub timestamp: NaiveDateTime,
    pub forecast: Vec<f64>,
    pub truth: Vec<f64>,
    pub cost: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub mtdo: f64,
    pub mape: f64,
    /// Mean signed percentage error.
    pub mean_error: f64,
    pub instances: Vec<InstanceResult>,
    pub histogram: Histogram,
    pub sweep: Option<Vec<SweepPoint>>,
}

/// Provenance stamped onto every written artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

/// Evaluates forecasts against truths, one two-stage solve per instance.
pub fn evaluate_forecasts(
    label: &str,
    model: &dyn TwoStageModel,
    params: &[f64],
    timestamps: &[NaiveDateTime],
    forecasts: &[Vec<f64>],
    truths: &[Vec<f64>],
) -> Result<EvalReport, EvalError> {
    if forecasts.len() != truths.len() || timestamps.len() != truths.len() {
        return Err(EvalError::LengthMismatch(forecasts.len(), truths.len()));
    }
    let costs: Vec<CostBreakdown> =
        forecasts.par_iter().zip(truths.par_iter()).map(|(f, y)| model.evaluate(params, f, y)).collect::<Result<_, _>>()?;
    let flat_f: Vec<f64> = forecasts.iter().flatten().copied().collect();
    let flat_y: Vec<f64> = truths.iter().flatten().copied().collect();
    let errors = error_percentages(&flat_f, &flat_y)?;
    Ok(EvalReport {
        label: label.to_string(),
        mtdo: mtdo(&costs)?,
        mape: mape(&flat_f, &flat_y)?,
        mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
        histogram: error_histogram(&errors, 30.0, 1.0)?,
        instances: timestamps
            .iter()
            .zip(forecasts)
            .zip(truths)
            .zip(costs)
            .map(|(((t, f), y), cost)| InstanceResult { timestamp: *t, forecast: f.clone(), truth: y.clone(), cost })
            .collect(),
        sweep: None,
    })
}

impl EvalReport {
    /// Writes `<prefix>_instances.csv`, `<prefix>_forecasts.csv`,
    /// `<prefix>_histogram.dat`, optionally `<prefix>_sweep.dat`, and
    /// `<prefix>_summary.json` into `dir`.
    pub fn write(&self, dir: &Path, prefix: &str, stamp: &Stamp) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        let head = stamp.comment();

        let mut s = head.clone();
        s.push_str("timestamp,c1,c2,total,shed\n");
        for r in &self.instances {
            let _ = writeln!(s, "{},{},{},{},{}", r.timestamp.format(TIMESTAMP_FORMAT), r.cost.c1, r.cost.c2, r.cost.total, r.cost.shed);
        }
        std::fs::write(dir.join(format!("{prefix}_instances.csv")), s)?;

        let mut s = head.clone();
        s.push_str("timestamp,forecast,truth\n");
        for r in &self.instances {
            for (k, (f, y)) in r.forecast.iter().zip(&r.truth).enumerate() {
                let t = r.timestamp + chrono::Duration::hours(k as i64);
                let _ = writeln!(s, "{},{f},{y}", t.format(TIMESTAMP_FORMAT));
            }
        }
        std::fs::write(dir.join(format!("{prefix}_forecasts.csv")), s)?;

        let mut s = head.clone();
        s.push_str("# error_pct count\n");
        for (c, n) in self.histogram.centers.iter().zip(&self.histogram.counts) {
            let _ = writeln!(s, "{c} {n}");
        }
        std::fs::write(dir.join(format!("{prefix}_histogram.dat")), s)?;

        if let Some(sweep) = &self.sweep {
            write_sweep(&dir.join(format!("{prefix}_sweep.dat")), sweep, stamp)?;
        }

        let summary = serde_json::json!({
            "label": self.label,
            "mtdo": self.mtdo,
            "mape": self.mape,
            "mean_error_pct": self.mean_error,
            "histogram_mode_pct": self.histogram.mode(),
            "instances": self.instances.len(),
            "config_hash": stamp.config_hash,
            "seed": stamp.seed,
        });
        std::fs::write(dir.join(format!("{prefix}_summary.json")), serde_json::to_string_pretty(&summary).expect("json"))?;
        Ok(())
    }
}

/// Gnuplot-friendly sweep table: `error_pct total increment`. The increment
/// baseline is the grid minimum.
pub fn write_sweep(path: &Path, sweep: &[SweepPoint], stamp: &Stamp) -> Result<(), EvalError> {
    let mut s = stamp.comment();
    s.push_str("# error_pct total increment (baseline: grid minimum)\n");
    for p in sweep {
        let _ = writeln!(s, "{} {} {}", p.error * 100.0, p.total, p.increment);
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mtdo_by_hand() {
        let pairs = [(10.0, 1.0), (20.0, -2.0), (30.0, 0.0), (15.0, 5.0), (25.0, 1.0)];
        let costs: Vec<_> = pairs.iter().map(|&(a, b)| CostBreakdown::new(a, b, 0.0)).collect();
        assert!((mtdo(&costs).unwrap() - 21.0).abs() < 1e-12);
        assert!(matches!(mtdo(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn mape_is_absolute() {
        assert_eq!(mape(&[5.0, 7.0], &[5.0, 7.0]).unwrap(), 0.0);
        assert!((mape(&[110.0, 220.0], &[100.0, 200.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!((mape(&[110.0, 90.0], &[100.0, 100.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(mape(&[1.0], &[0.0]), Err(EvalError::ZeroTruth(0))));
    }

    #[test]
    fn histogram_by_hand() {
        let h = error_histogram(&[0.0, 0.0, 0.0], 5.0, 1.0).unwrap();
        assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(h.mode(), Some(0.0));
        let h = error_histogram(&[-2.2, -1.8, -2.0, 0.4, 3.6, 40.0, -99.0], 5.0, 1.0).unwrap();
        assert_eq!(h.total(), 7);
        assert_eq!(h.counts[3], 3);
        assert_eq!(h.counts[5], 1);
        assert_eq!(h.counts[9], 1);
        assert_eq!(h.counts[10], 1);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.mode(), Some(-2.0));
    }

    #[test]
    fn grid_hits_round_values() {
        let g = error_grid(-0.2, 0.2, 0.001).unwrap();
        assert_eq!(g.len(), 401);
        assert!(g.contains(&0.0));
        assert_eq!(g[70], -0.13);
    }
}
