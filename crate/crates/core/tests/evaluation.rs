use adol_core::dispatch::{Case1Model, Case1Params, CostBreakdown, TwoStageModel};
use adol_core::evalkit::*;
use chrono::NaiveDate;
use proptest::prelude::*;

fn reference() -> (Case1Model, Vec<f64>) {
    let model = Case1Model::new(Case1Params::reference());
    let w = model.nominal_params();
    (model, w)
}

#[test]
fn mtdo_trivia() {
    let one = CostBreakdown::new(100.0, -3.0, 0.0);
    assert_eq!(mtdo(&[one]).unwrap(), 97.0);
    assert_eq!(mtdo(&[one; 7]).unwrap(), 97.0);
}

#[test]
fn sweep_finds_reserve_kink() {
    let (model, w) = reference();
    let grid = error_grid(-0.2, 0.2, 0.001).unwrap();
    let sweep = cost_increment_sweep(&model, &w, &[1000.0], &grid).unwrap();
    let best = sweep_argmin(&sweep).unwrap();
    assert!((best.error + 0.13).abs() <= 0.001 + 1e-12, "argmin {}", best.error);
    assert_eq!(best.increment, 0.0);
    let zero = sweep.iter().find(|p| p.error == 0.0).unwrap();
    assert!(zero.increment > 0.0);

    // Independent evaluation of the same points.
    for p in sweep.iter().step_by(37) {
        let c = model.evaluate(&w, &[1000.0 * (1.0 + p.error)], &[1000.0]).unwrap().total;
        assert!((c - p.total).abs() < 1e-9);
    }
}

#[test]
fn without_reserves_the_perfect_forecast_is_optimal() {
    let mut p = Case1Params::reference();
    p.reserve_fraction_up = 0.0;
    p.reserve_fraction_down = 0.0;
    p.up_reserve_cost = vec![0.0; 3];
    p.down_reserve_cost = vec![0.0; 3];
    let model = Case1Model::new(p);
    let w = model.nominal_params();
    let sweep = cost_increment_sweep(&model, &w, &[1000.0], &error_grid(-0.2, 0.2, 0.001).unwrap()).unwrap();
    assert_eq!(sweep_argmin(&sweep).unwrap().error, 0.0);
}

#[test]
fn sweep_is_piecewise_linear() {
    let (model, w) = reference();
    let grid = error_grid(-0.2, 0.2, 0.005).unwrap();
    let sweep = cost_increment_sweep(&model, &w, &[1000.0], &grid).unwrap();
    let second: Vec<(f64, f64)> =
        sweep.windows(3).map(|s| (s[1].error, s[0].total - 2.0 * s[1].total + s[2].total)).collect();
    for (e, d2) in &second {
        if (-0.125..=-0.005).contains(e) {
            assert!(d2.abs() < 1e-6, "curvature {d2} at {e}");
        }
    }
    let kink = second.iter().find(|(e, _)| (*e + 0.13).abs() < 1e-12).unwrap();
    assert!(kink.1 > 1.0);
    assert!(second.iter().filter(|(_, d2)| d2.abs() > 1e-6).count() <= 8);
}

#[test]
fn histogram_counts_and_bins() {
    let errors = [-13.2, -12.9, -13.0, -12.6, -1.4, 0.2, 0.49, 0.51, 29.0, 31.0, -45.0];
    let h = error_histogram(&errors, 30.0, 1.0).unwrap();
    assert_eq!(h.centers.len(), 61);
    assert_eq!(h.total(), errors.len());
    let count = |c: f64| h.counts[h.centers.iter().position(|x| *x == c).unwrap()];
    assert_eq!(count(-13.0), 4);
    assert_eq!(count(-1.0), 1);
    assert_eq!(count(0.0), 2);
    assert_eq!(count(1.0), 1);
    assert_eq!(count(29.0), 1);
    assert_eq!(count(30.0), 1);
    assert_eq!(count(-30.0), 1);
    assert_eq!(h.mode(), Some(-13.0));
}

proptest! {
    #[test]
    fn histogram_ignores_order(mut errors in prop::collection::vec(-40.0f64..40.0, 0..60), seed in 0u64..1000) {
        let a = error_histogram(&errors, 30.0, 1.0).unwrap();
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        errors.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let b = error_histogram(&errors, 30.0, 1.0).unwrap();
        prop_assert_eq!(a.total(), errors.len());
        prop_assert_eq!(a, b);
    }
}

#[test]
fn report_files_are_stamped() {
    let (model, w) = reference();
    let t0 = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let ts: Vec<_> = (0..3).map(|h| t0 + chrono::Duration::hours(h)).collect();
    let f = vec![vec![900.0], vec![1000.0], vec![1100.0]];
    let y = vec![vec![1000.0]; 3];
    let mut report = evaluate_forecasts("mse", &model, &w, &ts, &f, &y).unwrap();
    let expect: f64 = f.iter().map(|fc| model.evaluate(&w, fc, &[1000.0]).unwrap().total).sum::<f64>() / 3.0;
    assert!((report.mtdo - expect).abs() < 1e-9);
    assert!((report.mape - 20.0 / 3.0).abs() < 1e-9);
    assert_eq!(report.histogram.total(), 3);
    report.sweep = Some(cost_increment_sweep(&model, &w, &[1000.0], &error_grid(-0.02, 0.02, 0.01).unwrap()).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let stamp = Stamp { config_hash: "abc123".into(), seed: 7 };
    report.write(dir.path(), "mse", &stamp).unwrap();
    for name in ["instances.csv", "forecasts.csv", "histogram.dat", "sweep.dat"] {
        let text = std::fs::read_to_string(dir.path().join(format!("mse_{name}"))).unwrap();
        assert!(text.starts_with("# config_hash=abc123 seed=7\n"), "{name}");
    }
    let instances = std::fs::read_to_string(dir.path().join("mse_instances.csv")).unwrap();
    assert_eq!(instances.lines().count(), 5);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("mse_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["instances"], 3);
}

#[test]
fn input_errors() {
    assert!(matches!(error_grid(0.1, -0.1, 0.01), Err(EvalError::InvalidGrid(_))));
    assert!(matches!(error_histogram(&[1.0], 5.0, 0.0), Err(EvalError::InvalidGrid(_))));
    assert!(matches!(error_percentages(&[1.0, 2.0], &[1.0]), Err(EvalError::LengthMismatch(2, 1))));
}
