//! Commitment-enumeration oracles for the unit-commitment models. Every
//! on/off pattern is checked against min up/down by run lengths, startup and
//! shutdown flags are derived from it, and the remaining LP is priced with
//! all binaries fixed.

use adol_core::dispatch::case2::{build_uc_day_ahead, build_uc_real_time, Case2Params, DayAheadFixings};
use adol_core::solver::{solve_lp, LinearProgram, LpStatus, SolverOptions};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use adol_core::dispatch::network::{Line, NetworkSpec};

/// Best day-ahead plan found by enumeration.
#[derive(Debug, Clone)]
pub struct OraclePlan {
    pub cost: f64,
    pub angles: Vec<Vec<f64>>,
    pub up_reserve: Vec<Vec<f64>>,
    pub down_reserve: Vec<Vec<f64>>,
}

fn price(lp: &LinearProgram, fixed: &[(usize, f64)]) -> Option<(f64, Vec<f64>)> {
    let mut lp = lp.clone();
    for &(j, v) in fixed {
        lp.lower[j] = v;
        lp.upper[j] = v;
    }
    let s = solve_lp(&lp, &SolverOptions::default()).expect("oracle LP solve");
    (s.status == LpStatus::Optimal).then_some((s.objective, s.primal))
}

/// True when every on-run (off-run) that begins inside the horizon and ends
/// inside it lasts at least `min_up` (`min_down`) hours.
pub fn respects_min_times(initial_on: bool, on: &[bool], min_up: usize, min_down: usize) -> bool {
    let mut prev = initial_on;
    let mut run_start: Option<usize> = None;
    for (t, &s) in on.iter().enumerate() {
        if s != prev {
            if let Some(start) = run_start {
                let needed = if prev { min_up } else { min_down };
                if t - start < needed {
                    return false;
                }
            }
            run_start = Some(t);
        }
        prev = s;
    }
    true
}

fn transitions(initial: bool, on: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let mut prev = initial;
    let mut up = Vec::new();
    let mut down = Vec::new();
    for &s in on {
        up.push(if s && !prev { 1.0 } else { 0.0 });
        down.push(if !s && prev { 1.0 } else { 0.0 });
        prev = s;
    }
    (up, down)
}

pub fn day_ahead_oracle(loads: &[Vec<f64>], p: &Case2Params, voll: Option<f64>) -> Option<OraclePlan> {
    let (mip, lay) = match build_uc_day_ahead(loads, p, voll) {
        Ok(v) => v,
        Err(_) => return None,
    };
    let (ni, nt) = (p.units.len(), p.horizon);
    assert!(ni * nt <= 16);
    let mut best: Option<(f64, Vec<f64>)> = None;
    'mask: for mask in 0u32..(1 << (ni * nt)) {
        let mut fixed = Vec::new();
        for (i, u) in p.units.iter().enumerate() {
            let on: Vec<bool> = (0..nt).map(|t| mask >> (i * nt + t) & 1 == 1).collect();
            if !respects_min_times(u.initial_on, &on, u.min_up, u.min_down) {
                continue 'mask;
            }
            let (up, down) = transitions(u.initial_on, &on);
            for t in 0..nt {
                fixed.push((lay.on(i, t), if on[t] { 1.0 } else { 0.0 }));
                fixed.push((lay.start(i, t), up[t]));
                fixed.push((lay.stop(i, t), down[t]));
            }
        }
        if let Some((c, x)) = price(&mip.base, &fixed) {
            if best.as_ref().is_none_or(|b| c < b.0) {
                best = Some((c, x));
            }
        }
    }
    let (cost, x) = best?;
    let grid = |rows: usize, col: &dyn Fn(usize, usize) -> usize| -> Vec<Vec<f64>> {
        (0..rows).map(|r| (0..nt).map(|t| x[col(r, t)]).collect()).collect()
    };
    Some(OraclePlan {
        cost,
        angles: grid(p.network.node_count, &|n, t| lay.angle(n, t)),
        up_reserve: grid(ni, &|i, t| lay.up(i, t)),
        down_reserve: grid(ni, &|i, t| lay.down(i, t)),
    })
}

pub fn real_time_oracle(
    true_loads: &[Vec<f64>],
    forecast_loads: &[Vec<f64>],
    fixed: DayAheadFixings<'_>,
    p: &Case2Params,
    voll: f64,
) -> f64 {
    let (mip, lay) = build_uc_real_time(true_loads, forecast_loads, fixed, p, voll).expect("real-time build");
    let (nj, nt) = (p.quickstart.len(), p.horizon);
    assert!(nj * nt <= 16);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (nj * nt)) {
        let mut fixings = Vec::new();
        for j in 0..nj {
            let on: Vec<bool> = (0..nt).map(|t| mask >> (j * nt + t) & 1 == 1).collect();
            let (up, down) = transitions(false, &on);
            for t in 0..nt {
                fixings.push((lay.qs_on(j, t), if on[t] { 1.0 } else { 0.0 }));
                fixings.push((lay.qs_start(j, t), up[t]));
                fixings.push((lay.qs_stop(j, t), down[t]));
            }
        }
        if let Some((c, _)) = price(&mip.base, &fixings) {
            best = best.min(c);
        }
    }
    best
}

/// Enumerated two-stage cost for system profiles.
pub fn two_stage_oracle(forecast: &[f64], truth: &[f64], p: &Case2Params, voll: f64) -> Option<f64> {
    let fl = p.disaggregate(forecast);
    let tl = p.disaggregate(truth);
    let plan = day_ahead_oracle(&fl, p, None)?;
    let fixed = DayAheadFixings { angles: &plan.angles, up_reserve: &plan.up_reserve, down_reserve: &plan.down_reserve };
    Some(plan.cost + real_time_oracle(&tl, &fl, fixed, p, voll))
}

/// Three-node, two-unit instance with one quick-start unit and distinct
/// prices everywhere so that optima are unique.
pub fn three_node_two_unit(horizon: usize) -> Case2Params {
    let mut p = Case2Params::desk();
    p.units.truncate(2);
    p.units[0].p_max = 500.0;
    p.units[0].up_reserve_limit = 200.0;
    p.units[0].down_reserve_limit = 200.0;
    p.units[1].p_max = 400.0;
    p.units[1].up_reserve_limit = 160.0;
    p.units[1].down_reserve_limit = 160.0;
    p.units[1].initial_on = false;
    p.units[1].initial_output = 0.0;
    p.quickstart.truncate(1);
    p.quickstart[0].node = 2;
    p.horizon = horizon;
    p.network = NetworkSpec {
        node_count: 3,
        lines: vec![
            Line { from: 0, to: 1, reactance: 0.1, capacity: 300.0 },
            Line { from: 1, to: 2, reactance: 0.2, capacity: 250.0 },
            Line { from: 0, to: 2, reactance: 0.15, capacity: 300.0 },
        ],
        reference_node: 0,
        load_nodes: vec![1, 2],
        base_mva: 100.0,
    };
    p.load_participation = vec![0.55, 0.45];
    p
}

/// Random feasible-looking variation of [`three_node_two_unit`].
pub fn random_instance(rng: &mut ChaCha8Rng, horizon: usize) -> (Case2Params, Vec<f64>, Vec<f64>) {
    let mut p = three_node_two_unit(horizon);
    for u in p.units.iter_mut() {
        u.energy_cost = rng.random_range(20.0..60.0);
        u.up_reserve_cost = 0.1 * u.energy_cost;
        u.down_reserve_cost = 0.02 * u.energy_cost;
        u.startup_cost = rng.random_range(0.0..2000.0);
        u.shutdown_cost = rng.random_range(0.0..500.0);
        u.min_up = rng.random_range(1..=3);
        u.min_down = rng.random_range(1..=3);
        u.ramp_up = rng.random_range(150.0..400.0);
        u.ramp_down = u.ramp_up;
        u.initial_on = rng.random_bool(0.5);
        u.initial_output = if u.initial_on { u.p_min } else { 0.0 };
    }
    p.units[0].initial_on = true;
    p.units[0].initial_output = p.units[0].p_min;
    let forecast: Vec<f64> = (0..horizon).map(|_| rng.random_range(150.0..550.0)).collect();
    let truth: Vec<f64> = forecast.iter().map(|f| f * rng.random_range(0.85..1.15)).collect();
    (p, forecast, truth)
}
