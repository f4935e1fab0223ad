//! Load forecasters and their training under three losses: the learned
//! surrogate (ADOL), mean squared error, and a decision loss that re-solves
//! the dispatch problem.

use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{Datelike, NaiveDateTime, Timelike};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adol::adol_loss_and_grad;
use crate::data_io::{DataError, MinMax, RawSeries};
use crate::dispatch::{DispatchError, TwoStageModel};
use crate::neural::{Activation, Gradients, History, Mlp, NeuralError, Optimizer, OptimizerKind, Standardizer};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("series has {got} samples but the features need more than {needed}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("solver budget of {budget} exceeded ({used} solves)")]
    SolverBudgetExceeded { budget: u64, used: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Format(String),
}

/// Which inputs a forecaster sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    /// Lagged loads, in hours.
    pub lags: Vec<usize>,
    /// Hour-of-day and day-of-week sine/cosine pairs.
    pub calendar: bool,
    /// Include the series' extra columns at the target hour(s).
    pub extras: bool,
    /// Hours per forecast instance. With `group_size > 1`, instances are
    /// consecutive blocks aligned to midnight and every lag must be at least
    /// `group_size`.
    pub group_size: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self { lags: vec![1, 24, 168], calendar: true, extras: false, group_size: 1 }
    }
}

impl FeatureSpec {
    /// Block features for day-long instances.
    pub fn daily() -> Self {
        Self { lags: vec![24, 168], calendar: true, extras: false, group_size: 24 }
    }

    pub fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    /// First hour of each instance.
    pub timestamps: Vec<NaiveDateTime>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub names: Vec<String>,
    pub spec: FeatureSpec,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn target_dim(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> FeatureTable {
        FeatureTable {
            timestamps: self.timestamps[range.clone()].to_vec(),
            x: self.x[range.clone()].to_vec(),
            y: self.y[range].to_vec(),
            names: self.names.clone(),
            spec: self.spec.clone(),
        }
    }

    /// Index of the first instance starting at or after `t`.
    pub fn position(&self, t: NaiveDateTime) -> usize {
        self.timestamps.partition_point(|s| *s < t)
    }
}

fn calendar(t: NaiveDateTime) -> [f64; 4] {
    let tau = std::f64::consts::TAU;
    let h = t.hour() as f64 / 24.0;
    let d = t.weekday().num_days_from_monday() as f64 / 7.0;
    [(tau * h).sin(), (tau * h).cos(), (tau * d).sin(), (tau * d).cos()]
}

/// Builds one row per forecastable instance. Hourly series are assumed
/// contiguous.
pub fn build_features(series: &RawSeries, spec: &FeatureSpec) -> Result<FeatureTable, ForecastError> {
    let g = spec.group_size;
    if g == 0 {
        return Err(ForecastError::InvalidSpec("group_size must be positive".into()));
    }
    if g > 1 && spec.lags.iter().any(|&l| l < g) {
        return Err(ForecastError::InvalidSpec(format!("lags must be at least the group size {g}")));
    }
    let max_lag = spec.max_lag();
    if series.len() <= max_lag || series.len() < max_lag + g {
        return Err(ForecastError::InsufficientHistory { needed: max_lag + g - 1, got: series.len() });
    }

    let mut names = Vec::new();
    for &lag in &spec.lags {
        for k in 0..g {
            names.push(if g == 1 { format!("lag_{lag}") } else { format!("lag_{lag}_h{k}") });
        }
    }
    if spec.calendar {
        if g == 1 {
            names.extend(["hour_sin", "hour_cos"].map(String::from));
        }
        names.extend(["dow_sin", "dow_cos"].map(String::from));
    }
    if spec.extras {
        for c in &series.extras {
            for k in 0..g {
                names.push(if g == 1 { c.name.clone() } else { format!("{}_h{k}", c.name) });
            }
        }
    }

    let mut table = FeatureTable { timestamps: Vec::new(), x: Vec::new(), y: Vec::new(), names, spec: spec.clone() };
    let mut t0 = max_lag;
    if g > 1 {
        while t0 < series.len() && series.timestamps[t0].hour() != 0 {
            t0 += 1;
        }
    }
    while t0 + g <= series.len() {
        let mut x = Vec::with_capacity(table.names.len());
        for &lag in &spec.lags {
            x.extend((0..g).map(|k| series.load[t0 + k - lag]));
        }
        if spec.calendar {
            let c = calendar(series.timestamps[t0]);
            if g == 1 {
                x.extend_from_slice(&c);
            } else {
                x.extend_from_slice(&c[2..]);
            }
        }
        if spec.extras {
            for c in &series.extras {
                x.extend_from_slice(&c.values[t0..t0 + g]);
            }
        }
        table.timestamps.push(series.timestamps[t0]);
        table.x.push(x);
        table.y.push(series.load[t0..t0 + g].to_vec());
        t0 += g;
    }
    Ok(table)
}

/// A feature scaler plus network; predictions are in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub spec: FeatureSpec,
    pub scaler: MinMax,
    pub net: Mlp,
}

impl Forecaster {
    pub fn predict_row(&self, x: &[f64]) -> Result<Vec<f64>, ForecastError> {
        Ok(self.net.forward(&self.scaler.apply(x))?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ForecastError> {
        std::fs::write(path, serde_json::to_string_pretty(self).map_err(|e| ForecastError::Format(e.to_string()))?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ForecastError> {
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| ForecastError::Format(e.to_string()))
    }
}

pub fn predict(model: &Forecaster, table: &FeatureTable) -> Result<Vec<Vec<f64>>, ForecastError> {
    table.x.iter().map(|x| model.predict_row(x)).collect()
}

/// Training objective of a forecaster.
#[derive(Clone, Copy)]
pub enum LossKind<'a> {
    /// Frozen surrogate evaluated at `(ŷ − y, params)`.
    Adol { surrogate: &'a Mlp, params: &'a [f64] },
    Mse,
    /// `|c(ŷ; y) − c(y; y)|` with central differences of width `step` [MW].
    Decision { model: &'a dyn TwoStageModel, params: &'a [f64], step: f64 },
}

impl LossKind<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Adol { .. } => "adol",
            LossKind::Mse => "mse",
            LossKind::Decision { .. } => "dl",
        }
    }
}

/// Decision loss and its central-difference gradient. `baseline` is
/// `c(y; y)` when already known.
pub fn decision_loss(
    model: &dyn TwoStageModel,
    params: &[f64],
    forecast: &[f64],
    truth: &[f64],
    baseline: Option<f64>,
    step: f64,
) -> Result<(f64, Vec<f64>), DispatchError> {
    let base = match baseline {
        Some(b) => b,
        None => model.evaluate(params, truth, truth)?.total,
    };
    let loss_at = |f: &[f64]| -> Result<f64, DispatchError> { Ok((model.evaluate(params, f, truth)?.total - base).abs()) };
    let loss = loss_at(forecast)?;
    let mut grad = Vec::with_capacity(forecast.len());
    let mut probe = forecast.to_vec();
    for i in 0..forecast.len() {
        probe[i] = forecast[i] + step;
        let up = loss_at(&probe)?;
        probe[i] = (forecast[i] - step).max(0.0);
        let down = loss_at(&probe)?;
        grad.push((up - down) / (forecast[i] + step - probe[i]));
        probe[i] = forecast[i];
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Cap on dispatch solves during decision-loss training.
    pub solver_budget: Option<u64>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            activation: Activation::Softplus,
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            seed: 0,
            solver_budget: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedForecaster {
    pub model: Forecaster,
    /// Mean training loss per epoch.
    pub history: History,
    /// Dispatch solves made during training, per epoch.
    pub solves_per_epoch: Vec<u64>,
    pub wall_time: Duration,
}

impl TrainedForecaster {
    pub fn total_solves(&self) -> u64 {
        self.solves_per_epoch.iter().sum()
    }
}

/// Trains a fresh forecaster on `table`. Scaling statistics come from
/// `table` only.
pub fn train_forecaster(table: &FeatureTable, loss: LossKind<'_>, cfg: &ForecastConfig) -> Result<TrainedForecaster, ForecastError> {
    let started = Instant::now();
    if table.is_empty() {
        return Err(ForecastError::InvalidSpec("empty feature table".into()));
    }
    if cfg.epochs > 0 && (cfg.batch_size == 0 || !(cfg.learning_rate > 0.0)) {
        return Err(ForecastError::InvalidSpec("batch_size and learning_rate must be positive".into()));
    }
    let d = table.target_dim();
    let scaler = MinMax::fit(&table.x)?;
    let xs: Vec<Vec<f64>> = table.x.iter().map(|x| scaler.apply(x)).collect();

    let mut sizes = vec![xs[0].len()];
    sizes.extend(&cfg.hidden);
    sizes.push(d);
    let mut net = Mlp::new(&sizes, cfg.activation, cfg.seed)?;
    net.input_norm = Standardizer::fit(&xs, sizes[0]);
    net.output_norm = Standardizer::fit(&table.y, d);
    for s in &mut net.output_norm.std {
        if *s == 0.0 {
            *s = 1.0;
        }
    }

    let counter = |l: &LossKind| match l {
        LossKind::Decision { model, .. } => model.solve_count(),
        _ => 0,
    };
    let baselines: Vec<f64> = match loss {
        LossKind::Decision { model, params, .. } => {
            table.y.par_iter().map(|y| model.evaluate(params, y, y).map(|c| c.total)).collect::<Result<_, _>>()?
        }
        _ => Vec::new(),
    };
    let solves_at_start = counter(&loss);

    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = History::default();
    let mut solves_per_epoch = Vec::new();
    let mut solves_seen = solves_at_start;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let traces = batch.iter().map(|&i| net.forward_trace(&xs[i])).collect::<Result<Vec<_>, _>>()?;
            let per_sample: Vec<(f64, Vec<f64>)> = match loss {
                LossKind::Mse => batch
                    .iter()
                    .zip(&traces)
                    .map(|(&i, tr)| {
                        let e: Vec<f64> = tr.output.iter().zip(&table.y[i]).map(|(f, y)| f - y).collect();
                        let l = e.iter().map(|v| v * v).sum::<f64>() / d as f64;
                        (l, e.iter().map(|v| 2.0 * v / d as f64).collect())
                    })
                    .collect(),
                LossKind::Adol { surrogate, params } => batch
                    .iter()
                    .zip(&traces)
                    .map(|(&i, tr)| adol_loss_and_grad(surrogate, &tr.output, &table.y[i], params))
                    .collect::<Result<_, _>>()?,
                LossKind::Decision { model, params, step } => batch
                    .par_iter()
                    .zip(traces.par_iter())
                    .map(|(&i, tr)| decision_loss(model, params, &tr.output, &table.y[i], Some(baselines[i]), step))
                    .collect::<Result<_, _>>()?,
            };
            let mut grads = Gradients::zeros_like(&net);
            let scale = 1.0 / batch.len() as f64;
            for (tr, (l, g)) in traces.iter().zip(&per_sample) {
                epoch_loss += l;
                let upstream: Vec<f64> = g.iter().map(|v| v * scale).collect();
                net.backward(tr, &upstream, &mut grads)?;
            }
            if !epoch_loss.is_finite() || !grads.is_finite() {
                return Err(NeuralError::NonFiniteLoss { iteration: epoch, loss: epoch_loss }.into());
            }
            opt.step(&mut net, &grads);
            if let (Some(budget), LossKind::Decision { model, .. }) = (cfg.solver_budget, loss) {
                let used = model.solve_count() - solves_at_start;
                if used > budget {
                    return Err(ForecastError::SolverBudgetExceeded { budget, used });
                }
            }
        }
        history.push(epoch, epoch_loss / xs.len() as f64);
        let now = counter(&loss);
        solves_per_epoch.push(now - solves_seen);
        solves_seen = now;
    }
    Ok(TrainedForecaster {
        model: Forecaster { spec: table.spec.clone(), scaler, net },
        history,
        solves_per_epoch,
        wall_time: started.elapsed(),
    })
}
