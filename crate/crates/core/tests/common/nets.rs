//! Random networks for gradient checks.

use adol_core::neural::{Activation, Mlp, Standardizer};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Largest componentwise difference relative to the largest reference entry.
pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub fn random_net(r: &mut ChaCha8Rng, act: Activation, outputs: usize) -> Mlp {
    let depth = r.random_range(1..=3);
    let mut sizes = vec![r.random_range(1..=5)];
    for _ in 0..depth {
        sizes.push(r.random_range(1..=8));
    }
    sizes.push(outputs);
    let mut net = Mlp::new(&sizes, act, r.random()).unwrap();
    let d = sizes[0];
    net.input_norm = Standardizer {
        mean: (0..d).map(|_| r.random_range(-50.0..50.0)).collect(),
        std: (0..d).map(|_| r.random_range(0.5..20.0)).collect(),
    };
    net.output_norm = Standardizer { mean: vec![r.random_range(-10.0..10.0); outputs], std: vec![r.random_range(0.5..5.0); outputs] };
    let biases: Vec<f64> = net.params().iter().map(|p| p + r.random_range(-0.3..0.3)).collect();
    net.set_params(&biases).unwrap();
    net
}

pub fn random_input(r: &mut ChaCha8Rng, net: &Mlp) -> Vec<f64> {
    (0..net.input_dim()).map(|i| net.input_norm.mean[i] + net.input_norm.std[i] * r.random_range(-2.0..2.0)).collect()
}
