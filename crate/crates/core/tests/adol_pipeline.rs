use adol_core::adol::*;
use adol_core::dispatch::{Case1Model, Case1Params, TwoStageModel};
use adol_core::neural::{Activation, Mlp, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn records_1d(target: impl Fn(f64) -> f64, n: usize, seed: u64) -> Vec<ScenarioRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let e = rng.random_range(-200.0..200.0);
            ScenarioRecord { error: vec![e], params: vec![], total_cost: target(e), shed_flag: false }
        })
        .collect()
}

/// Kinked like the reserve cost curve: steep left of −130, shallow right.
fn kinked(e: f64) -> f64 {
    if e < -130.0 {
        32_600.0 - 19.3 * (e + 130.0)
    } else {
        32_600.0 + 0.69 * (e + 130.0)
    }
}

fn fitted_kink() -> Mlp {
    let cfg = SurrogateConfig {
        hidden: vec![32],
        activation: Activation::Relu,
        train: TrainConfig { iterations: 8_000, batch_size: 64, learning_rate: 3e-3, final_learning_rate: Some(1e-5), seed: 1, ..Default::default() },
        ..Default::default()
    };
    train_surrogate(&records_1d(kinked, 4_000, 9), &cfg).unwrap().net
}

#[test]
fn constant_cost_is_learned() {
    let records = records_1d(|_| 5_000.0, 500, 1);
    let cfg = SurrogateConfig { train: TrainConfig { iterations: 500, ..Default::default() }, ..Default::default() };
    let fit = train_surrogate(&records, &cfg).unwrap();
    assert!(fit.holdout_mse < 1e-12, "mse {}", fit.holdout_mse);
    assert_eq!((fit.train_count, fit.holdout_count), (450, 50));
    assert!((fit.net.forward(&[37.0]).unwrap()[0] - 5_000.0).abs() < 1e-6);
}

#[test]
fn kinked_target_argmin_recovered() {
    let net = fitted_kink();
    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    for k in -2000..=2000 {
        let e = k as f64 * 0.1;
        let c = net.forward(&[e]).unwrap()[0];
        if c < best {
            best = c;
            arg = e;
        }
    }
    assert!((arg + 130.0).abs() <= 4.0, "argmin {arg}");

    let (_, g) = adol_loss_and_grad(&net, &[950.0], &[950.0], &[]).unwrap();
    assert!(g[0] > 0.0, "slope at zero error {}", g[0]);
}

#[test]
fn fixed_params_do_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let records: Vec<ScenarioRecord> = (0..300)
        .map(|_| {
            let e: f64 = rng.random_range(-50.0..50.0);
            ScenarioRecord { error: vec![e], params: vec![30.0, 5.0], total_cost: 1_000.0 + e * e, shed_flag: false }
        })
        .collect();
    let cfg = SurrogateConfig { hidden: vec![8], train: TrainConfig { iterations: 200, ..Default::default() }, ..Default::default() };
    let net = train_surrogate(&records, &cfg).unwrap().net;
    let (a, ga) = adol_loss_and_grad(&net, &[510.0], &[500.0], &[30.0, 5.0]).unwrap();
    let (b, gb) = adol_loss_and_grad(&net, &[510.0], &[500.0], &[33.0, 4.6]).unwrap();
    assert_eq!((a, ga), (b, gb));
}

#[test]
fn loss_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..100 {
        let d = rng.random_range(1..4);
        let p = rng.random_range(0..3);
        let mut net = Mlp::new(&[d + p, 6, 5, 1], Activation::Softplus, trial).unwrap();
        for s in &mut net.input_norm.std {
            *s = rng.random_range(0.5..50.0);
        }
        let forecast: Vec<f64> = (0..d).map(|_| rng.random_range(800.0..1200.0)).collect();
        let truth: Vec<f64> = (0..d).map(|_| rng.random_range(800.0..1200.0)).collect();
        let params: Vec<f64> = (0..p).map(|_| rng.random_range(1.0..60.0)).collect();
        let (_, g) = adol_loss_and_grad(&net, &forecast, &truth, &params).unwrap();
        for i in 0..d {
            let h = 1e-4;
            let mut up = forecast.clone();
            up[i] += h;
            let mut down = forecast.clone();
            down[i] -= h;
            let fd = (adol_loss_and_grad(&net, &up, &truth, &params).unwrap().0 - adol_loss_and_grad(&net, &down, &truth, &params).unwrap().0) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "trial {trial}: fd {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn shape_errors() {
    let net = Mlp::new(&[3, 4, 1], Activation::Tanh, 0).unwrap();
    assert!(adol_loss_and_grad(&net, &[1.0], &[1.0], &[1.0]).is_err());
    assert!(adol_loss_and_grad(&net, &[1.0, 2.0], &[1.0], &[1.0]).is_err());
}

#[test]
fn labels_follow_the_cost_curve() {
    let model = Case1Model::new(Case1Params::reference());
    let w = model.nominal_params();
    let typical = [1000.0];
    let perfect = model.evaluate(&w, &typical, &typical).unwrap().total;
    let s_up = 0.15;
    let at_kink = 1000.0 * (1.0 - s_up / (1.0 + s_up));
    let samples = vec![
        Scenario { forecast: vec![1000.0], params: w.clone() },
        Scenario { forecast: vec![at_kink], params: w.clone() },
        Scenario { forecast: vec![1040.0], params: w.clone() },
        Scenario { forecast: vec![1040.0], params: w.clone() },
    ];
    let r = label_scenarios(&model, &samples, &typical);
    assert!((r[0].total_cost - perfect).abs() < 1e-9);
    assert_eq!(r[0].error, vec![0.0]);
    assert!(r[1].total_cost < perfect);
    assert_eq!(r[2], r[3]);
}

#[test]
fn labeling_is_independent_of_worker_count() {
    let model = Case1Model::new(Case1Params::reference());
    let w = model.nominal_params();
    let samples = sample_scenarios(&[1000.0], &w, &SamplerConfig { sample_count: 300, seed: 5, ..Default::default() }).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| label_scenarios(&model, &samples, &[1000.0]))
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert!(one.iter().all(|r| !r.failed() && (r.error[0]).abs() <= 200.0 + 1e-9));
    assert!(one.iter().all(|r| r.params.iter().zip(&w).all(|(p, n)| (p - n).abs() <= 0.1 * n.abs() + 1e-9)));
}

#[test]
fn records_round_trip_through_csv() {
    let records = vec![
        ScenarioRecord { error: vec![-12.5, 3.0], params: vec![30.0, 41.25], total_cost: 32_600.125, shed_flag: false },
        ScenarioRecord { error: vec![0.0, 1e-7], params: vec![29.0, 40.0], total_cost: f64::NAN, shed_flag: false },
        ScenarioRecord { error: vec![150.0, -150.0], params: vec![31.0, 39.0], total_cost: 1e7, shed_flag: true },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    write_records(&path, &records).unwrap();
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "error_0,error_1,param_0,param_1,cost,shed_flag");
    let back = read_records(&path).unwrap();
    assert_eq!(back.len(), 3);
    assert_eq!(back[0], records[0]);
    assert!(back[1].failed());
    assert_eq!(back[2], records[2]);
}

#[test]
fn sampler_defaults_survive_serialization() {
    let cfg = SamplerConfig::default();
    assert_eq!((cfg.gamma, cfg.beta, cfg.sample_count), (0.2, 0.1, 20_000));
    let back: SamplerConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
    let a = sample_scenarios(&[1000.0], &[30.0], &SamplerConfig { sample_count: 50, ..cfg.clone() }).unwrap();
    assert_eq!(a, sample_scenarios(&[1000.0], &[30.0], &SamplerConfig { sample_count: 50, ..cfg }).unwrap());
}
