//! Copper-plate LP dispatch for a single hour.
//!
//! Day-ahead schedules energy `P` and up/down reserves `R^U`, `R^D` on the
//! slow units for the forecast load. Real time activates those reserves
//! (`r^U ≤ R^U*`, `r^D ≤ R^D*`) or quick-start units to cover the deviation.
//! The real-time balance is an inequality, so surplus beyond procured down
//! reserve is simply not refunded.
//!
//! Column layouts (stable, relied on by the outcome extractors):
//! - day-ahead: `[P_0..P_I | R^U_0..R^U_I | R^D_0..R^D_I]`
//! - real-time: `[r^U_0..r^U_I | r^D_0..r^D_I | P^qs_0..P^qs_J | shed]`

use serde::{Deserialize, Serialize};

use super::{check_len, check_nonnegative, CostBreakdown, DispatchError, SolveCounter, TwoStageModel};
use crate::solver::{solve_lp, ConstraintSense, LinearProgram, LpStatus, SolverOptions};

pub const DEFAULT_VOLL: f64 = 10_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case1Params {
    /// `C` [$/MWh], one per slow unit.
    pub energy_cost: Vec<f64>,
    /// `C^qs` [$/MWh], one per quick-start unit.
    pub quickstart_cost: Vec<f64>,
    /// `C^U` [$/MW].
    pub up_reserve_cost: Vec<f64>,
    /// `C^D` [$/MW].
    pub down_reserve_cost: Vec<f64>,
    /// `P̄` [MW].
    pub gen_limit: Vec<f64>,
    /// `R̄^U` [MW].
    pub up_reserve_limit: Vec<f64>,
    /// `R̄^D` [MW].
    pub down_reserve_limit: Vec<f64>,
    /// `P̄^qs` [MW].
    pub quickstart_limit: Vec<f64>,
    /// `S^U`: upward reserve as a fraction of forecast load.
    pub reserve_fraction_up: f64,
    /// `S^D`.
    pub reserve_fraction_down: f64,
}

impl Case1Params {
    /// Three slow and three quick-start units, reserves priced at 10% / 2% of
    /// energy cost, 15% reserve requirement each way.
    pub fn reference() -> Self {
        let energy = vec![30.0, 40.0, 50.0];
        let gen_limit = vec![800.0; 3];
        Self {
            up_reserve_cost: energy.iter().map(|c| c * 0.10).collect(),
            down_reserve_cost: energy.iter().map(|c| c * 0.02).collect(),
            energy_cost: energy,
            quickstart_cost: vec![60.0, 70.0, 80.0],
            up_reserve_limit: gen_limit.iter().map(|p| p * 0.4).collect(),
            down_reserve_limit: gen_limit.iter().map(|p| p * 0.4).collect(),
            gen_limit,
            quickstart_limit: vec![200.0; 3],
            reserve_fraction_up: 0.15,
            reserve_fraction_down: 0.15,
        }
    }

    pub fn units(&self) -> usize {
        self.energy_cost.len()
    }

    pub fn quickstart_units(&self) -> usize {
        self.quickstart_cost.len()
    }

    pub fn validate(&self) -> Result<(), DispatchError> {
        let i = self.units();
        let j = self.quickstart_units();
        check_len("up_reserve_cost", &self.up_reserve_cost, i)?;
        check_len("down_reserve_cost", &self.down_reserve_cost, i)?;
        check_len("gen_limit", &self.gen_limit, i)?;
        check_len("up_reserve_limit", &self.up_reserve_limit, i)?;
        check_len("down_reserve_limit", &self.down_reserve_limit, i)?;
        check_len("quickstart_limit", &self.quickstart_limit, j)?;
        for (name, v) in [
            ("energy_cost", &self.energy_cost),
            ("quickstart_cost", &self.quickstart_cost),
            ("up_reserve_cost", &self.up_reserve_cost),
            ("down_reserve_cost", &self.down_reserve_cost),
            ("gen_limit", &self.gen_limit),
            ("up_reserve_limit", &self.up_reserve_limit),
            ("down_reserve_limit", &self.down_reserve_limit),
            ("quickstart_limit", &self.quickstart_limit),
        ] {
            check_nonnegative(name, v)?;
        }
        for (name, s) in [("reserve_fraction_up", self.reserve_fraction_up), ("reserve_fraction_down", self.reserve_fraction_down)] {
            if !(0.0..1.0).contains(&s) {
                return Err(DispatchError::InvalidParams(format!("{name} = {s} outside [0, 1)")));
            }
        }
        for k in 0..i {
            if self.up_reserve_limit[k] > self.gen_limit[k] || self.down_reserve_limit[k] > self.gen_limit[k] {
                return Err(DispatchError::InvalidParams(format!("reserve limit above generation limit on unit {k}")));
            }
        }
        Ok(())
    }

    /// Dynamic subset `(C, C^qs, C^U, C^D)`, concatenated.
    pub fn dynamic_vector(&self) -> Vec<f64> {
        [&self.energy_cost, &self.quickstart_cost, &self.up_reserve_cost, &self.down_reserve_cost]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn dynamic_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, n) in [("C", self.units()), ("C_qs", self.quickstart_units()), ("C_U", self.units()), ("C_D", self.units())] {
            names.extend((0..n).map(|k| format!("{prefix}[{k}]")));
        }
        names
    }

    pub fn with_dynamic(&self, w: &[f64]) -> Result<Self, DispatchError> {
        let (i, j) = (self.units(), self.quickstart_units());
        if w.len() != 3 * i + j {
            return Err(DispatchError::InvalidParams(format!(
                "dynamic vector has {} entries, expected {}",
                w.len(),
                3 * i + j
            )));
        }
        let mut p = self.clone();
        p.energy_cost = w[..i].to_vec();
        p.quickstart_cost = w[i..i + j].to_vec();
        p.up_reserve_cost = w[i + j..2 * i + j].to_vec();
        p.down_reserve_cost = w[2 * i + j..].to_vec();
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case1DayAheadOutcome {
    pub generation: Vec<f64>,
    pub up_reserve: Vec<f64>,
    pub down_reserve: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case1RealTimeOutcome {
    pub up_activation: Vec<f64>,
    pub down_activation: Vec<f64>,
    pub quickstart: Vec<f64>,
    pub shed: f64,
    pub cost: f64,
}

fn check_load(name: &str, load: f64) -> Result<(), DispatchError> {
    if !load.is_finite() || load < 0.0 {
        return Err(DispatchError::InvalidInput(format!("{name} = {load}")));
    }
    Ok(())
}

pub fn build_day_ahead(forecast_load: f64, p: &Case1Params) -> Result<LinearProgram, DispatchError> {
    use ConstraintSense::*;
    p.validate()?;
    check_load("forecast load", forecast_load)?;
    let i = p.units();
    let l = forecast_load;

    let capacity: f64 = p.gen_limit.iter().sum();
    let required = l * (1.0 + p.reserve_fraction_up);
    if required > capacity + 1e-9 {
        return Err(DispatchError::InfeasibleCapacity { capacity, required });
    }
    let up_cap: f64 = p.up_reserve_limit.iter().sum();
    if p.reserve_fraction_up * l > up_cap + 1e-9 {
        return Err(DispatchError::InfeasibleCapacity { capacity: up_cap, required: p.reserve_fraction_up * l });
    }
    let down_cap: f64 = p.down_reserve_limit.iter().sum();
    if p.reserve_fraction_down * l > down_cap + 1e-9 {
        return Err(DispatchError::InfeasibleCapacity { capacity: down_cap, required: p.reserve_fraction_down * l });
    }

    let (gen, up, down) = (0, i, 2 * i);
    let mut lp = LinearProgram::new(3 * i);
    for k in 0..i {
        lp.objective[gen + k] = p.energy_cost[k];
        lp.objective[up + k] = p.up_reserve_cost[k];
        lp.objective[down + k] = p.down_reserve_cost[k];
        lp.set_bounds(gen + k, 0.0, p.gen_limit[k]);
        lp.set_bounds(up + k, 0.0, p.up_reserve_limit[k]);
        lp.set_bounds(down + k, 0.0, p.down_reserve_limit[k]);
    }
    let all = |offset: usize| (0..i).map(|k| (offset + k, 1.0)).collect::<Vec<_>>();
    lp.add_sparse_row(&all(gen), Eq, l);
    lp.add_sparse_row(&all(up), Eq, p.reserve_fraction_up * l);
    lp.add_sparse_row(&all(down), Eq, p.reserve_fraction_down * l);
    for k in 0..i {
        lp.add_sparse_row(&[(up + k, 1.0), (down + k, 1.0)], Le, p.gen_limit[k]);
        lp.add_sparse_row(&[(gen + k, 1.0), (down + k, -1.0)], Ge, 0.0);
        lp.add_sparse_row(&[(gen + k, 1.0), (up + k, 1.0)], Le, p.gen_limit[k]);
    }
    Ok(lp)
}

pub fn solve_day_ahead(forecast_load: f64, p: &Case1Params, opts: &SolverOptions) -> Result<Case1DayAheadOutcome, DispatchError> {
    let lp = build_day_ahead(forecast_load, p)?;
    let sol = solve_lp(&lp, opts)?;
    if sol.status != LpStatus::Optimal {
        return Err(DispatchError::Infeasible { stage: "day-ahead" });
    }
    let i = p.units();
    Ok(Case1DayAheadOutcome {
        generation: sol.primal[..i].to_vec(),
        up_reserve: sol.primal[i..2 * i].to_vec(),
        down_reserve: sol.primal[2 * i..].to_vec(),
        cost: sol.objective,
    })
}

pub fn build_real_time(
    true_load: f64,
    forecast_load: f64,
    reserved: (&[f64], &[f64]),
    p: &Case1Params,
    voll: f64,
) -> Result<LinearProgram, DispatchError> {
    p.validate()?;
    check_load("true load", true_load)?;
    check_load("forecast load", forecast_load)?;
    let (i, j) = (p.units(), p.quickstart_units());
    let (up_star, down_star) = reserved;
    if up_star.len() != i || down_star.len() != i {
        return Err(DispatchError::InvalidInput("reserve vectors do not match unit count".into()));
    }
    let (up, down, qs, shed) = (0, i, 2 * i, 2 * i + j);
    let mut lp = LinearProgram::new(2 * i + j + 1);
    let mut balance = Vec::with_capacity(2 * i + j + 1);
    for k in 0..i {
        lp.objective[up + k] = p.energy_cost[k];
        lp.objective[down + k] = -p.energy_cost[k];
        lp.set_bounds(up + k, 0.0, up_star[k].max(0.0));
        lp.set_bounds(down + k, 0.0, down_star[k].max(0.0));
        balance.push((up + k, 1.0));
        balance.push((down + k, -1.0));
    }
    for q in 0..j {
        lp.objective[qs + q] = p.quickstart_cost[q];
        lp.set_bounds(qs + q, 0.0, p.quickstart_limit[q]);
        balance.push((qs + q, 1.0));
    }
    lp.objective[shed] = voll;
    balance.push((shed, 1.0));
    lp.add_sparse_row(&balance, ConstraintSense::Ge, true_load - forecast_load);
    Ok(lp)
}

pub fn solve_real_time(
    true_load: f64,
    forecast_load: f64,
    day_ahead: &Case1DayAheadOutcome,
    p: &Case1Params,
    voll: f64,
    opts: &SolverOptions,
) -> Result<Case1RealTimeOutcome, DispatchError> {
    let lp = build_real_time(true_load, forecast_load, (&day_ahead.up_reserve, &day_ahead.down_reserve), p, voll)?;
    let sol = solve_lp(&lp, opts)?;
    if sol.status != LpStatus::Optimal {
        return Err(DispatchError::Infeasible { stage: "real-time" });
    }
    let (i, j) = (p.units(), p.quickstart_units());
    Ok(Case1RealTimeOutcome {
        up_activation: sol.primal[..i].to_vec(),
        down_activation: sol.primal[i..2 * i].to_vec(),
        quickstart: sol.primal[2 * i..2 * i + j].to_vec(),
        shed: sol.primal[2 * i + j],
        cost: sol.objective,
    })
}

/// Day-ahead against `forecast`, then real-time against `truth` with the
/// procured reserves fixed.
pub fn evaluate_two_stage(
    forecast: f64,
    truth: f64,
    p: &Case1Params,
    voll: f64,
    opts: &SolverOptions,
) -> Result<CostBreakdown, DispatchError> {
    let da = solve_day_ahead(forecast, p, opts)?;
    let rt = solve_real_time(truth, forecast, &da, p, voll, opts)?;
    Ok(CostBreakdown::new(da.cost, rt.cost, rt.shed))
}

/// Case 1 as a [`TwoStageModel`] with a scalar (hourly) forecast.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Case1Model {
    pub params: Case1Params,
    #[serde(default = "default_voll")]
    pub voll: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(skip)]
    counter: SolveCounter,
}

fn default_voll() -> f64 {
    DEFAULT_VOLL
}

impl Case1Model {
    pub fn new(params: Case1Params) -> Self {
        Self { params, voll: DEFAULT_VOLL, solver: SolverOptions::default(), counter: SolveCounter::default() }
    }
}

impl TwoStageModel for Case1Model {
    fn forecast_dim(&self) -> usize {
        1
    }

    fn nominal_params(&self) -> Vec<f64> {
        self.params.dynamic_vector()
    }

    fn param_names(&self) -> Vec<String> {
        self.params.dynamic_names()
    }

    fn evaluate(&self, params: &[f64], forecast: &[f64], truth: &[f64]) -> Result<CostBreakdown, DispatchError> {
        if forecast.len() != 1 || truth.len() != 1 {
            return Err(DispatchError::InvalidInput("Case 1 forecasts are scalar".into()));
        }
        let p = self.params.with_dynamic(params)?;
        self.counter.bump();
        let da = solve_day_ahead(forecast[0], &p, &self.solver)?;
        self.counter.bump();
        let rt = solve_real_time(truth[0], forecast[0], &da, &p, self.voll, &self.solver)?;
        Ok(CostBreakdown::new(da.cost, rt.cost, rt.shed))
    }

    fn solve_count(&self) -> u64 {
        self.counter.get()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn reference_day_ahead_merit_order() {
        // Unit 1 runs flat out, unit 2 carries the upward reserve (cheaper than
        // moving 150 MW of energy onto it), unit 1 the downward reserve:
        // 30·800 + 40·200 + 4·150 + 0.6·150 = 32 690.
        let da = solve_day_ahead(1000.0, &Case1Params::reference(), &opts()).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-7);
        assert!(close(&da.generation, &[800.0, 200.0, 0.0]), "{:?}", da.generation);
        assert!(close(&da.up_reserve, &[0.0, 150.0, 0.0]), "{:?}", da.up_reserve);
        assert!(close(&da.down_reserve, &[150.0, 0.0, 0.0]), "{:?}", da.down_reserve);
        assert!((da.cost - 32_690.0).abs() < 1e-6);
    }

    #[test]
    fn zero_load_costs_nothing() {
        let da = solve_day_ahead(0.0, &Case1Params::reference(), &opts()).unwrap();
        assert!(da.generation.iter().chain(&da.up_reserve).chain(&da.down_reserve).all(|v| v.abs() < 1e-9));
        assert!(da.cost.abs() < 1e-9);
    }

    #[test]
    fn no_reserve_requirement_uses_cheapest_unit() {
        let mut p = Case1Params::reference();
        p.reserve_fraction_up = 0.0;
        p.reserve_fraction_down = 0.0;
        let da = solve_day_ahead(100.0, &p, &opts()).unwrap();
        assert!((da.generation[0] - 100.0).abs() < 1e-9);
        assert!((da.cost - 3_000.0).abs() < 1e-9);
    }

    #[test]
    fn capacity_shortfall_reported_before_solving() {
        let err = build_day_ahead(2200.0, &Case1Params::reference()).unwrap_err();
        assert!(matches!(err, DispatchError::InfeasibleCapacity { .. }));
    }

    #[test]
    fn perfect_forecast_needs_no_real_time_action() {
        let p = Case1Params::reference();
        let da = solve_day_ahead(1000.0, &p, &opts()).unwrap();
        let rt = solve_real_time(1000.0, 1000.0, &da, &p, DEFAULT_VOLL, &opts()).unwrap();
        assert!(rt.cost.abs() < 1e-9);
        assert!(rt.shed.abs() < 1e-9);
    }

    #[test]
    fn deficit_covered_by_reserve_activation() {
        // 100 MW short with 150 MW of up reserve on unit 2: 40·100 beats quick-start at 60.
        let p = Case1Params::reference();
        let da = solve_day_ahead(1000.0, &p, &opts()).unwrap();
        let rt = solve_real_time(1100.0, 1000.0, &da, &p, DEFAULT_VOLL, &opts()).unwrap();
        assert!((rt.up_activation[1] - 100.0).abs() < 1e-9);
        assert!((rt.cost - 4_000.0).abs() < 1e-9);
        assert!(rt.quickstart.iter().all(|q| q.abs() < 1e-9));
    }

    #[test]
    fn surplus_refunded_by_down_activation() {
        let p = Case1Params::reference();
        let da = solve_day_ahead(1000.0, &p, &opts()).unwrap();
        let rt = solve_real_time(900.0, 1000.0, &da, &p, DEFAULT_VOLL, &opts()).unwrap();
        assert!((rt.down_activation[0] - 100.0).abs() < 1e-9);
        assert!((rt.cost + 3_000.0).abs() < 1e-9);
    }

    #[test]
    fn dynamic_vector_round_trip() {
        let p = Case1Params::reference();
        let w = p.dynamic_vector();
        assert_eq!(w.len(), 12);
        assert_eq!(p.with_dynamic(&w).unwrap(), p);
        assert_eq!(p.dynamic_names()[3], "C_qs[0]");
        assert!(p.with_dynamic(&w[..5]).is_err());
    }

    #[test]
    fn model_counts_two_solves_per_evaluation() {
        let m = Case1Model::new(Case1Params::reference());
        let w = m.nominal_params();
        let c = m.evaluate(&w, &[1000.0], &[1000.0]).unwrap();
        assert!((c.total - 32_690.0).abs() < 1e-6);
        assert_eq!(m.solve_count(), 2);
    }
}
