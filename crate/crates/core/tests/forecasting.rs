use adol_core::adol::{train_surrogate, ScenarioRecord, SurrogateConfig};
use adol_core::data_io::{synthesize, RawSeries, SynthSpec};
use adol_core::dispatch::{Case1Model, Case1Params, TwoStageModel};
use adol_core::evalkit::{cost_increment_sweep, error_grid, error_percentages, sweep_argmin};
use adol_core::forecast::*;
use adol_core::neural::{Activation, TrainConfig};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};

fn hourly(n: usize, f: impl Fn(usize) -> f64) -> RawSeries {
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    RawSeries { timestamps: (0..n).map(|t| start + chrono::Duration::hours(t as i64)).collect(), load: (0..n).map(f).collect(), extras: vec![] }
}

fn reference() -> (Case1Model, Vec<f64>) {
    let model = Case1Model::new(Case1Params::reference());
    let w = model.nominal_params();
    (model, w)
}

#[test]
fn one_year_row_count() {
    let s = hourly(8760, |h| 900.0 + (h % 24) as f64);
    let t = build_features(&s, &FeatureSpec::default()).unwrap();
    assert_eq!(t.len(), 8760 - 168);
    assert_eq!(t.timestamps[0], s.timestamps[168]);
    assert_eq!(t.x[0][..3], [s.load[167], s.load[144], s.load[0]]);
    assert_eq!(t.y[0], vec![s.load[168]]);
}

#[test]
fn mse_learns_a_constant() {
    let table = build_features(&hourly(600, |_| 750.0), &FeatureSpec::default()).unwrap();
    let cfg = ForecastConfig { epochs: 40, learning_rate: 1e-2, ..Default::default() };
    let tf = train_forecaster(&table, LossKind::Mse, &cfg).unwrap();
    assert!(predict(&tf.model, &table).unwrap().iter().all(|f| (f[0] - 750.0).abs() < 0.5));
    assert_eq!(tf.total_solves(), 0);
}

#[test]
fn memorizes_a_small_table() {
    let table = build_features(&hourly(178, |h| 500.0 + 37.0 * ((h * 7) % 10) as f64), &FeatureSpec::default()).unwrap();
    assert_eq!(table.len(), 10);
    let cfg = ForecastConfig { hidden: vec![32], epochs: 8000, batch_size: 10, learning_rate: 1e-2, ..Default::default() };
    let tf = train_forecaster(&table, LossKind::Mse, &cfg).unwrap();
    let f = predict(&tf.model, &table).unwrap();
    let rmse = (f.iter().zip(&table.y).map(|(a, b)| (a[0] - b[0]).powi(2)).sum::<f64>() / 10.0).sqrt();
    assert!(rmse < 1.0, "rmse {rmse}");
}

#[test]
fn batch_and_row_predictions_agree() {
    let s = synthesize(&SynthSpec { hours: 400, ..Default::default() }, 2).unwrap();
    let table = build_features(&s, &FeatureSpec::default()).unwrap();
    let tf = train_forecaster(&table, LossKind::Mse, &ForecastConfig { epochs: 2, ..Default::default() }).unwrap();
    let batch = predict(&tf.model, &table).unwrap();
    for (row, x) in batch.iter().zip(&table.x) {
        assert_eq!(row, &tf.model.predict_row(x).unwrap());
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.json");
    tf.model.save(&path).unwrap();
    assert_eq!(predict(&Forecaster::load(&path).unwrap(), &table).unwrap(), batch);
}

#[test]
fn zero_weights_predict_the_bias() {
    let table = build_features(&hourly(300, |h| 800.0 + h as f64), &FeatureSpec::default()).unwrap();
    let mut tf = train_forecaster(&table, LossKind::Mse, &ForecastConfig { epochs: 0, ..Default::default() }).unwrap();
    for layer in &mut tf.model.net.layers {
        layer.weights.iter_mut().for_each(|w| *w = 0.0);
        layer.biases.iter_mut().for_each(|b| *b = 0.0);
    }
    tf.model.net.layers.last_mut().unwrap().biases[0] = 0.5;
    let norm = &tf.model.net.output_norm;
    let expect = norm.mean[0] + 0.5 * norm.std[0];
    assert!(predict(&tf.model, &table).unwrap().iter().all(|f| (f[0] - expect).abs() < 1e-9));
}

#[test]
fn decision_loss_shape() {
    let (model, w) = reference();
    let y = [1000.0];
    let (l0, _) = decision_loss(&model, &w, &y, &y, None, 5.0).unwrap();
    assert_eq!(l0, 0.0);

    let (up, _) = decision_loss(&model, &w, &[1100.0], &y, None, 5.0).unwrap();
    let (down, _) = decision_loss(&model, &w, &[900.0], &y, None, 5.0).unwrap();
    let base = model.evaluate(&w, &y, &y).unwrap().total;
    let oracle = |f: f64| (model.evaluate(&w, &[f], &y).unwrap().total - base).abs();
    assert_eq!((up, down), (oracle(1100.0), oracle(900.0)));
    assert!(up > down, "+10% {up} vs -10% {down}");

    let sweep = cost_increment_sweep(&model, &w, &y, &error_grid(-0.2, 0.2, 0.001).unwrap()).unwrap();
    let best = sweep_argmin(&sweep).unwrap();
    let at_min = 1000.0 * (1.0 - 0.15 / 1.15);
    let (l, _) = decision_loss(&model, &w, &[at_min], &y, None, 5.0).unwrap();
    let c_min = model.evaluate(&w, &[at_min], &y).unwrap().total;
    assert!(l > 0.0);
    assert!(c_min <= best.total + 1e-9);
}

#[test]
fn decision_loss_gradient_is_a_central_difference() {
    let (model, w) = reference();
    let before = model.solve_count();
    let (_, g) = decision_loss(&model, &w, &[1050.0], &[1000.0], None, 5.0).unwrap();
    // baseline, loss and two probes, two stages each
    assert_eq!(model.solve_count() - before, 8);
    let base = model.evaluate(&w, &[1000.0], &[1000.0]).unwrap().total;
    let l = |f: f64| (model.evaluate(&w, &[f], &[1000.0]).unwrap().total - base).abs();
    assert!((g[0] - (l(1055.0) - l(1045.0)) / 10.0).abs() < 1e-9);
}

#[test]
fn solve_counters_and_budget() {
    let (model, w) = reference();
    let s = synthesize(&SynthSpec { hours: 400, ..Default::default() }, 5).unwrap();
    let table = build_features(&s, &FeatureSpec::default()).unwrap();
    let cfg = ForecastConfig { epochs: 2, ..Default::default() };
    let dl = train_forecaster(&table, LossKind::Decision { model: &model, params: &w, step: 5.0 }, &cfg).unwrap();
    assert_eq!(dl.solves_per_epoch.len(), 2);
    assert!(dl.solves_per_epoch.iter().all(|n| *n >= 2 * table.len() as u64));

    let budget = ForecastConfig { solver_budget: Some(100), ..cfg };
    let err = train_forecaster(&table, LossKind::Decision { model: &model, params: &w, step: 5.0 }, &budget).unwrap_err();
    assert!(matches!(err, ForecastError::SolverBudgetExceeded { budget: 100, .. }));
}

#[test]
fn adol_training_shifts_errors_toward_the_kink() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let records: Vec<ScenarioRecord> = (0..4000)
        .map(|_| {
            let e: f64 = rng.random_range(-200.0..200.0);
            let c = if e < -130.0 { 32_600.0 - 19.3 * (e + 130.0) } else { 32_600.0 + 0.69 * (e + 130.0) };
            ScenarioRecord { error: vec![e], params: vec![], total_cost: c, shed_flag: false }
        })
        .collect();
    let cfg = SurrogateConfig {
        hidden: vec![32],
        activation: Activation::Relu,
        train: TrainConfig { iterations: 8_000, learning_rate: 3e-3, final_learning_rate: Some(1e-5), seed: 1, ..Default::default() },
        ..Default::default()
    };
    let surrogate = train_surrogate(&records, &cfg).unwrap().net;

    let s = synthesize(&SynthSpec { hours: 3000, ..Default::default() }, 8).unwrap();
    let table = build_features(&s, &FeatureSpec::default()).unwrap();
    let tf = train_forecaster(&table, LossKind::Adol { surrogate: &surrogate, params: &[] }, &ForecastConfig { epochs: 30, ..Default::default() }).unwrap();
    assert_eq!(tf.total_solves(), 0);
    let f: Vec<f64> = predict(&tf.model, &table).unwrap().into_iter().map(|v| v[0]).collect();
    let y: Vec<f64> = table.y.iter().map(|v| v[0]).collect();
    let e = error_percentages(&f, &y).unwrap();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    assert!((mean + 13.0).abs() < 3.0, "mean error {mean}%");
}

#[test]
fn mse_errors_centre_on_zero() {
    let s = synthesize(&SynthSpec { hours: 3000, ..Default::default() }, 8).unwrap();
    let table = build_features(&s, &FeatureSpec::default()).unwrap();
    let tf = train_forecaster(&table.slice(0..2500), LossKind::Mse, &ForecastConfig::default()).unwrap();
    let test = table.slice(2500..table.len());
    let f: Vec<f64> = predict(&tf.model, &test).unwrap().into_iter().map(|v| v[0]).collect();
    let y: Vec<f64> = test.y.iter().map(|v| v[0]).collect();
    let e = error_percentages(&f, &y).unwrap();
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    assert!(mean.abs() < 2.0, "mean error {mean}%");
}
