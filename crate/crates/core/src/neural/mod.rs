//! Dense feed-forward networks with hand-written backpropagation.
//!
//! A [`Mlp`] carries its own input and output standardization, so callers
//! always work in raw units: [`Mlp::forward`] takes raw inputs and returns raw
//! outputs, and every gradient is with respect to raw quantities.

mod train;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use train::{fit, History, Optimizer, OptimizerKind, TrainConfig};

pub const MODEL_FORMAT: &str = "adol-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("loss became non-finite ({loss}) at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Softplus,
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            // log(1 + e^z) without overflow.
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Softplus => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Per-column affine scaling. A column with `std == 0` is constant: it
/// normalizes to 0 and denormalizes to its mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Mean and population standard deviation of each column of `rows`.
    pub fn fit(rows: &[Vec<f64>], dim: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(v, m)| {
                let s = v.sqrt();
                // Spread at rounding level counts as constant.
                if s <= 1e-12 * m.abs().max(1.0) {
                    0.0
                } else {
                    s
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| if *s == 0.0 { 0.0 } else { (v - m) / s }).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| m + s * v).collect()
    }

    /// `∂normalize(x)_i / ∂x_i`.
    fn slope(&self, i: usize) -> f64 {
        if self.std[i] == 0.0 {
            0.0
        } else {
            1.0 / self.std[i]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
    /// Keep every weight after the first layer nonnegative.
    #[serde(default)]
    pub convex: bool,
}

/// Gradient with the same shape as the parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, s: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights).chain(self.biases.iter_mut().zip(&other.biases)) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()).flatten() {
            *v *= s;
        }
    }

    /// Flattened in [`Mlp::params`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| v.is_finite())
    }
}

/// Intermediate values of one forward pass, needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// Normalized input followed by each layer's activation output.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases. `sizes` runs from input width
    /// to output width; every hidden layer uses `hidden`, the output layer is
    /// linear.
    pub fn new(sizes: &[usize], hidden: Activation, seed: u64) -> Result<Self, NeuralError> {
        let n = sizes.len();
        if n < 2 {
            return Err(NeuralError::InvalidConfig("need at least input and output sizes".into()));
        }
        let acts = (1..n).map(|k| if k + 1 == n { Activation::Identity } else { hidden }).collect::<Vec<_>>();
        Self::with_activations(sizes, &acts, seed)
    }

    pub fn with_activations(sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self, NeuralError> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(NeuralError::InvalidConfig("one activation per layer required".into()));
        }
        if sizes.contains(&0) {
            return Err(NeuralError::InvalidConfig("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.random_range(-s..s)).collect(),
                    biases: vec![0.0; fan_out],
                    activation,
                }
            })
            .collect();
        Ok(Self {
            layers,
            input_norm: Standardizer::identity(sizes[0]),
            output_norm: Standardizer::identity(sizes[sizes.len() - 1]),
            convex: false,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), NeuralError> {
        if flat.len() != self.param_count() {
            return Err(NeuralError::ShapeMismatch { expected: self.param_count(), got: flat.len() });
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Clamps weights after the first layer at zero when in convex mode.
    pub fn project_convex(&mut self) {
        if self.convex {
            for l in self.layers.iter_mut().skip(1) {
                for w in &mut l.weights {
                    *w = w.max(0.0);
                }
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NeuralError> {
        if x.len() != self.input_dim() {
            return Err(NeuralError::ShapeMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.check_input(x)?;
        let mut a = self.input_norm.normalize(x);
        for l in &self.layers {
            a = (0..l.outputs)
                .map(|o| {
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    l.activation.apply(l.biases[o] + row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>())
                })
                .collect();
        }
        Ok(self.output_norm.denormalize(&a))
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace, NeuralError> {
        self.check_input(x)?;
        let mut activations = vec![self.input_norm.normalize(x)];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let a = activations.last().unwrap();
            let z: Vec<f64> = (0..l.outputs)
                .map(|o| l.biases[o] + l.weights[o * l.inputs..(o + 1) * l.inputs].iter().zip(a).map(|(w, v)| w * v).sum::<f64>())
                .collect();
            activations.push(z.iter().map(|&v| l.activation.apply(v)).collect());
            pre_activations.push(z);
        }
        let output = self.output_norm.denormalize(activations.last().unwrap());
        Ok(Trace { activations, pre_activations, output })
    }

    /// Backpropagates `upstream = ∂L/∂output` (raw units). Adds the parameter
    /// gradient into `grads` and returns `∂L/∂input` (raw units).
    pub fn backward(&self, trace: &Trace, upstream: &[f64], grads: &mut Gradients) -> Result<Vec<f64>, NeuralError> {
        if upstream.len() != self.output_dim() {
            return Err(NeuralError::ShapeMismatch { expected: self.output_dim(), got: upstream.len() });
        }
        let mut delta: Vec<f64> = upstream.iter().zip(&self.output_norm.std).map(|(g, s)| g * s).collect();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre_activations[k];
            let a_out = &trace.activations[k + 1];
            for o in 0..l.outputs {
                delta[o] *= l.activation.derivative(z[o], a_out[o]);
            }
            let a_in = &trace.activations[k];
            let gw = &mut grads.weights[k];
            for o in 0..l.outputs {
                let d = delta[o];
                if d != 0.0 {
                    for (g, v) in gw[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(a_in) {
                        *g += d * v;
                    }
                }
                grads.biases[k][o] += d;
            }
            let mut next = vec![0.0; l.inputs];
            for o in 0..l.outputs {
                let d = delta[o];
                if d != 0.0 {
                    for (n, w) in next.iter_mut().zip(&l.weights[o * l.inputs..(o + 1) * l.inputs]) {
                        *n += d * w;
                    }
                }
            }
            delta = next;
        }
        Ok(delta.iter().enumerate().map(|(i, d)| d * self.input_norm.slope(i)).collect())
    }

    /// Mean squared error over the batch (averaged over samples and outputs)
    /// and its parameter gradient.
    pub fn grad_params(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Gradients), NeuralError> {
        if inputs.len() != targets.len() {
            return Err(NeuralError::ShapeMismatch { expected: inputs.len(), got: targets.len() });
        }
        let mut grads = Gradients::zeros_like(self);
        let m = self.output_dim();
        let denom = (inputs.len().max(1) * m) as f64;
        let mut loss = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            if y.len() != m {
                return Err(NeuralError::ShapeMismatch { expected: m, got: y.len() });
            }
            let trace = self.forward_trace(x)?;
            let upstream: Vec<f64> = trace.output.iter().zip(y).map(|(f, t)| 2.0 * (f - t) / denom).collect();
            loss += trace.output.iter().zip(y).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / denom;
            self.backward(&trace, &upstream, &mut grads)?;
        }
        Ok((loss, grads))
    }

    /// Vector-Jacobian product `vᵀ ∂f/∂x`.
    pub fn vjp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let trace = self.forward_trace(x)?;
        let mut scratch = Gradients::zeros_like(self);
        self.backward(&trace, v, &mut scratch)
    }

    /// Gradient of a single-output network with respect to its input.
    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        if self.output_dim() != 1 {
            return Err(NeuralError::ShapeMismatch { expected: 1, got: self.output_dim() });
        }
        self.vjp(x, &[1.0])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, model: self.clone() })
            .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| NeuralError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(NeuralError::Format(format!("unexpected format tag `{}`", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(NeuralError::Format(format!("unsupported version {}", file.version)));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), NeuralError> {
        if self.layers.is_empty() {
            return Err(NeuralError::Format("no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(NeuralError::Format(format!("layer {k} has inconsistent parameter counts")));
            }
            if k > 0 && self.layers[k - 1].outputs != l.inputs {
                return Err(NeuralError::Format(format!("layer {k} does not chain")));
            }
        }
        if self.input_norm.dim() != self.input_dim() || self.output_norm.dim() != self.output_dim() {
            return Err(NeuralError::Format("normalization statistics do not match layer widths".into()));
        }
        if !self.params().iter().all(|v| v.is_finite()) {
            return Err(NeuralError::Format("non-finite parameter".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: Mlp,
}
