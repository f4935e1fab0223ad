use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp, NeuralError, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Learning rate reached at the last iteration by geometric decay;
    /// `None` keeps it constant.
    pub final_learning_rate: Option<f64>,
    /// Optimizer steps; zero returns the network untouched.
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Fit input/output standardization on the training data before training.
    pub standardize: bool,
    /// Loss history granularity, in iterations.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            final_learning_rate: None,
            iterations: 5_000,
            batch_size: 64,
            seed: 0,
            optimizer: OptimizerKind::default(),
            standardize: true,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NeuralError::InvalidConfig(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if let Some(f) = self.final_learning_rate {
            if !(f > 0.0 && f.is_finite()) {
                return Err(NeuralError::InvalidConfig(format!("final learning rate {f} must be positive")));
            }
        }
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(NeuralError::InvalidConfig("batch_size and log_every must be positive".into()));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(NeuralError::InvalidConfig("adam needs betas in [0, 1) and eps > 0".into()));
            }
        }
        Ok(())
    }
}

/// Loss recorded every `log_every` iterations, averaged over the window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub iteration: Vec<usize>,
    pub loss: Vec<f64>,
}

impl History {
    pub fn push(&mut self, iteration: usize, loss: f64) {
        self.iteration.push(iteration);
        self.loss.push(loss);
    }

    pub fn last(&self) -> Option<f64> {
        self.loss.last().copied()
    }
}

/// First-order optimizer state over a network's flattened parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, net: &Mlp) -> Self {
        let n = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => net.param_count(),
        };
        Self { kind, learning_rate, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    /// One descent step on `net`, then the convex projection if enabled.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let lr = self.learning_rate;
        let mut k = 0;
        let step = self.step as i32;
        for (layer, (gw, gb)) in net.layers.iter_mut().zip(grads.weights.iter().zip(&grads.biases)) {
            for (p, g) in layer.weights.iter_mut().zip(gw).chain(layer.biases.iter_mut().zip(gb)) {
                match self.kind {
                    OptimizerKind::Sgd => *p -= lr * g,
                    OptimizerKind::Adam { beta1, beta2, eps } => {
                        self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
                        self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
                        let m_hat = self.m[k] / (1.0 - beta1.powi(step));
                        let v_hat = self.v[k] / (1.0 - beta2.powi(step));
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
                k += 1;
            }
        }
        net.project_convex();
    }
}

/// Minibatch regression fit. The optimized objective is the mean squared
/// error in standardized target units; the history reports it in raw units.
pub fn fit(net: &Mlp, inputs: &[Vec<f64>], targets: &[Vec<f64>], cfg: &TrainConfig) -> Result<(Mlp, History), NeuralError> {
    cfg.validate()?;
    let mut net = net.clone();
    let mut history = History::default();
    if cfg.iterations == 0 {
        return Ok((net, history));
    }
    if inputs.len() != targets.len() {
        return Err(NeuralError::ShapeMismatch { expected: inputs.len(), got: targets.len() });
    }
    if inputs.is_empty() {
        return Err(NeuralError::InvalidConfig("no training samples".into()));
    }
    let (d, m) = (net.input_dim(), net.output_dim());
    for (x, y) in inputs.iter().zip(targets) {
        if x.len() != d {
            return Err(NeuralError::ShapeMismatch { expected: d, got: x.len() });
        }
        if y.len() != m {
            return Err(NeuralError::ShapeMismatch { expected: m, got: y.len() });
        }
    }
    if cfg.standardize {
        net.input_norm = Standardizer::fit(inputs, d);
        net.output_norm = Standardizer::fit(targets, m);
    }
    net.project_convex();
    let slopes: Vec<f64> = net.output_norm.std.iter().map(|s| if *s == 0.0 { 0.0 } else { 1.0 / s }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, &net);
    let batch = cfg.batch_size.min(inputs.len());
    let mut window = (0.0, 0usize);

    let decay = cfg.final_learning_rate.map(|f| (f / cfg.learning_rate).powf(1.0 / cfg.iterations.max(2).saturating_sub(1) as f64));
    for it in 1..=cfg.iterations {
        if let Some(r) = decay {
            opt.set_learning_rate(cfg.learning_rate * r.powi(it as i32 - 1));
        }
        let mut grads = Gradients::zeros_like(&net);
        let denom = (batch * m) as f64;
        let mut objective = 0.0;
        let mut raw = 0.0;
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let idx = order[cursor];
            cursor += 1;
            let trace = net.forward_trace(&inputs[idx])?;
            let mut upstream = vec![0.0; m];
            for o in 0..m {
                let err = trace.output[o] - targets[idx][o];
                let zerr = err * slopes[o];
                objective += zerr * zerr / denom;
                raw += err * err / denom;
                upstream[o] = 2.0 * zerr * slopes[o] / denom;
            }
            net.backward(&trace, &upstream, &mut grads)?;
        }
        if !objective.is_finite() || !grads.is_finite() {
            return Err(NeuralError::NonFiniteLoss { iteration: it, loss: objective });
        }
        opt.step(&mut net, &grads);
        window.0 += raw;
        window.1 += 1;
        if it % cfg.log_every == 0 || it == cfg.iterations {
            history.push(it, window.0 / window.1 as f64);
            window = (0.0, 0);
        }
    }
    Ok((net, history))
}
