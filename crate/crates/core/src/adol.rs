//! Learning the decision-objective surrogate: sample forecasts and dynamic
//! parameters around typical values, label each pair with its realized
//! two-stage cost, fit an MLP `ĉ(ŷ − ȳ, w)`, and expose its input gradient as
//! a training loss for forecasters.
//!
//! Surrogate inputs are laid out as `[error_0..error_d, param_0..param_p]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispatch::TwoStageModel;
use crate::neural::{fit, Activation, History, Mlp, NeuralError, TrainConfig};

#[derive(Debug, Error)]
pub enum AdolError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("record file: {0}")]
    Format(String),
    #[error("no usable records for training")]
    NoRecords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Forecast spread: `ŷ ∈ [(1−γ)ȳ, (1+γ)ȳ]`.
    pub gamma: f64,
    /// Parameter spread: `ŵ ∈ [(1−β)w̄, (1+β)w̄]`.
    pub beta: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { gamma: 0.2, beta: 0.1, sample_count: 20_000, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), AdolError> {
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..1.0).contains(&self.beta) {
            return Err(AdolError::InvalidConfig(format!("gamma {} and beta {} must lie in [0, 1)", self.gamma, self.beta)));
        }
        if self.sample_count == 0 {
            return Err(AdolError::InvalidConfig("sample_count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub forecast: Vec<f64>,
    pub params: Vec<f64>,
}

/// Draws every coordinate independently and uniformly from its interval.
pub fn sample_scenarios(typical: &[f64], nominal: &[f64], cfg: &SamplerConfig) -> Result<Vec<Scenario>, AdolError> {
    cfg.validate()?;
    if typical.is_empty() || typical.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(AdolError::InvalidConfig("typical profile must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |center: f64, spread: f64| {
        let (lo, hi) = ((1.0 - spread) * center, (1.0 + spread) * center);
        lo + rng.random::<f64>() * (hi - lo)
    };
    Ok((0..cfg.sample_count)
        .map(|_| Scenario {
            forecast: typical.iter().map(|&y| draw(y, cfg.gamma)).collect(),
            params: nominal.iter().map(|&w| draw(w, cfg.beta)).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    /// `ŷ − ȳ` [MW].
    pub error: Vec<f64>,
    pub params: Vec<f64>,
    /// Realized `c1 + c2` [$]; NaN marks a failed evaluation.
    pub total_cost: f64,
    /// Real-time shed or spill was needed.
    pub shed_flag: bool,
}

impl ScenarioRecord {
    pub fn failed(&self) -> bool {
        !self.total_cost.is_finite()
    }

    pub fn surrogate_input(&self) -> Vec<f64> {
        let mut x = self.error.clone();
        x.extend_from_slice(&self.params);
        x
    }
}

/// Evaluates each scenario against the truth `typical`. Runs on the current
/// rayon pool; output order follows input order. Failures are kept as
/// NaN-cost records.
pub fn label_scenarios(model: &dyn TwoStageModel, samples: &[Scenario], typical: &[f64]) -> Vec<ScenarioRecord> {
    samples
        .par_iter()
        .map(|s| {
            let error = s.forecast.iter().zip(typical).map(|(f, y)| f - y).collect();
            match model.evaluate(&s.params, &s.forecast, typical) {
                Ok(c) => ScenarioRecord { error, params: s.params.clone(), total_cost: c.total, shed_flag: c.shed > 1e-6 },
                Err(_) => ScenarioRecord { error, params: s.params.clone(), total_cost: f64::NAN, shed_flag: false },
            }
        })
        .collect()
}

/// CSV with columns `error_0..error_d, param_0..param_p, cost, shed_flag`.
/// Lines starting with `#` are ignored when reading.
pub fn write_records(path: &Path, records: &[ScenarioRecord]) -> Result<(), AdolError> {
    let mut w = csv::Writer::from_path(path)?;
    let (d, p) = records.first().map_or((0, 0), |r| (r.error.len(), r.params.len()));
    let mut header: Vec<String> = (0..d).map(|i| format!("error_{i}")).collect();
    header.extend((0..p).map(|i| format!("param_{i}")));
    header.extend(["cost".to_string(), "shed_flag".to_string()]);
    w.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = r.error.iter().chain(&r.params).map(f64::to_string).collect();
        row.push(r.total_cost.to_string());
        row.push(if r.shed_flag { "1" } else { "0" }.into());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ScenarioRecord>, AdolError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = r.headers()?.clone();
    let d = headers.iter().filter(|h| h.starts_with("error_")).count();
    let p = headers.iter().filter(|h| h.starts_with("param_")).count();
    if headers.len() != d + p + 2 {
        return Err(AdolError::Format(format!("unexpected header {headers:?}")));
    }
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let nums = rec
            .iter()
            .take(d + p + 1)
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| AdolError::Format(format!("record {}: {e}", k + 1)))?;
        out.push(ScenarioRecord {
            error: nums[..d].to_vec(),
            params: nums[d..d + p].to_vec(),
            total_cost: nums[d + p],
            shed_flag: &rec[d + p + 1] == "1",
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub convex: bool,
    /// Fraction held out for validation.
    pub holdout: f64,
    /// Keep records flagged for shed in the training set.
    pub include_flagged: bool,
    pub train: TrainConfig,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100],
            activation: Activation::Relu,
            convex: false,
            holdout: 0.1,
            include_flagged: false,
            train: TrainConfig {
                iterations: 100_000,
                batch_size: 256,
                learning_rate: 2e-3,
                final_learning_rate: Some(1e-5),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateFit {
    pub net: Mlp,
    pub history: History,
    pub holdout_mse: f64,
    /// Mean absolute percentage error of the cost on the holdout.
    pub holdout_mape: f64,
    pub train_count: usize,
    pub holdout_count: usize,
}

pub fn train_surrogate(records: &[ScenarioRecord], cfg: &SurrogateConfig) -> Result<SurrogateFit, AdolError> {
    let usable: Vec<&ScenarioRecord> = records.iter().filter(|r| !r.failed() && (cfg.include_flagged || !r.shed_flag)).collect();
    let first = usable.first().ok_or(AdolError::NoRecords)?;
    let dim = first.error.len() + first.params.len();
    if !(0.0..1.0).contains(&cfg.holdout) {
        return Err(AdolError::InvalidConfig(format!("holdout {} must lie in [0, 1)", cfg.holdout)));
    }
    let mut order: Vec<usize> = (0..usable.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x5eed));
    let n_hold = ((usable.len() as f64) * cfg.holdout).round() as usize;
    let n_hold = n_hold.min(usable.len() - 1);
    let (hold, train) = order.split_at(n_hold);

    let xy = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        idx.iter().map(|&i| (usable[i].surrogate_input(), vec![usable[i].total_cost])).unzip()
    };
    let (tx, ty) = xy(train);
    let (hx, hy) = xy(hold);
    if tx.iter().any(|x| x.len() != dim) {
        return Err(AdolError::Format("records have inconsistent widths".into()));
    }

    let mut sizes = vec![dim];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut net = Mlp::new(&sizes, cfg.activation, cfg.train.seed)?;
    net.convex = cfg.convex;
    let (net, history) = fit(&net, &tx, &ty, &cfg.train)?;

    let (mut mse, mut mape) = (0.0, 0.0);
    for (x, y) in hx.iter().zip(&hy) {
        let c = net.forward(x)?[0];
        mse += (c - y[0]).powi(2);
        mape += ((c - y[0]) / y[0]).abs() * 100.0;
    }
    let h = hx.len().max(1) as f64;
    Ok(SurrogateFit {
        net,
        history,
        holdout_mse: mse / h,
        holdout_mape: mape / h,
        train_count: tx.len(),
        holdout_count: hx.len(),
    })
}

/// `ĉ(ŷ − y, w)` and its gradient with respect to `ŷ`.
pub fn adol_loss_and_grad(surrogate: &Mlp, forecast: &[f64], truth: &[f64], params: &[f64]) -> Result<(f64, Vec<f64>), NeuralError> {
    let d = forecast.len();
    if truth.len() != d {
        return Err(NeuralError::ShapeMismatch { expected: d, got: truth.len() });
    }
    if surrogate.input_dim() != d + params.len() {
        return Err(NeuralError::ShapeMismatch { expected: surrogate.input_dim(), got: d + params.len() });
    }
    let mut x: Vec<f64> = forecast.iter().zip(truth).map(|(f, y)| f - y).collect();
    x.extend_from_slice(params);
    let trace = surrogate.forward_trace(&x)?;
    let mut scratch = crate::neural::Gradients::zeros_like(surrogate);
    let g = surrogate.backward(&trace, &[1.0], &mut scratch)?;
    Ok((trace.output[0], g[..d].to_vec()))
}
