//! Network-constrained unit commitment (MILP) over a multi-hour horizon.
//!
//! Day-ahead commits slow units (`I`, `U`, `D` binaries), schedules energy and
//! reserves under DC power flow, min up/down times and ramp limits. Real time
//! keeps the day-ahead angles and reserves fixed, re-balances every node in
//! deviation form with reserve activations and quick-start units (which have
//! their own commitment binaries), and pays `voll` for any shed or spilled
//! energy so that it is always feasible.
//!
//! Column layouts, with `IT = units × horizon` and `NT = nodes × horizon`,
//! all hour-minor (`index = block + entity·T + t`):
//! - day-ahead: `P | R^U | R^D | I | U | D` (each `IT`), `δ` (`NT`), then
//!   optional `shed` (`NT`)
//! - real-time: `r^U | r^D` (each `IT`), `P^qs | I^qs | U^qs | D^qs` (each
//!   `J·T`), `δ^RT`, `shed`, `spill` (each `NT`)

use serde::{Deserialize, Serialize};

use super::network::{Line, NetworkSpec};
use super::{check_nonnegative, CostBreakdown, DispatchError, SolveCounter, TwoStageModel};
use crate::solver::{solve_milp, ConstraintSense, LinearProgram, MilpStatus, MixedIntegerProgram, SolverOptions};

use ConstraintSense::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalUnit {
    pub node: usize,
    pub energy_cost: f64,
    pub up_reserve_cost: f64,
    pub down_reserve_cost: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub up_reserve_limit: f64,
    pub down_reserve_limit: f64,
    /// Minimum up time [h].
    pub min_up: usize,
    /// Minimum down time [h].
    pub min_down: usize,
    pub ramp_up: f64,
    pub ramp_down: f64,
    /// Commitment in the hour before the horizon.
    #[serde(default = "yes")]
    pub initial_on: bool,
    /// Output in the hour before the horizon [MW].
    #[serde(default)]
    pub initial_output: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuickStartUnit {
    pub node: usize,
    pub energy_cost: f64,
    pub startup_cost: f64,
    pub shutdown_cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case2Params {
    pub units: Vec<ThermalUnit>,
    pub quickstart: Vec<QuickStartUnit>,
    pub reserve_fraction_up: f64,
    pub reserve_fraction_down: f64,
    pub horizon: usize,
    pub network: NetworkSpec,
    /// Share of the system load carried by each load `k`; sums to 1.
    pub load_participation: Vec<f64>,
}

impl Case2Params {
    /// Three-bus, three-unit, 24-hour desk instance with three quick-start units.
    pub fn desk() -> Self {
        let line = |from, to| Line { from, to, reactance: 0.1, capacity: 400.0 };
        let thermal = |node, c: f64, su, sd, p_min, p_max: f64, min_updown, ramp| ThermalUnit {
            node,
            energy_cost: c,
            up_reserve_cost: 0.1 * c,
            down_reserve_cost: 0.02 * c,
            startup_cost: su,
            shutdown_cost: sd,
            p_min,
            p_max,
            up_reserve_limit: 0.4 * p_max,
            down_reserve_limit: 0.4 * p_max,
            min_up: min_updown,
            min_down: min_updown,
            ramp_up: ramp,
            ramp_down: ramp,
            initial_on: true,
            initial_output: p_min,
        };
        let quick = |node, c| QuickStartUnit {
            node,
            energy_cost: c,
            startup_cost: 100.0,
            shutdown_cost: 20.0,
            p_min: 0.0,
            p_max: 200.0,
            ramp_up: 200.0,
            ramp_down: 200.0,
        };
        Self {
            units: vec![
                thermal(0, 30.0, 2000.0, 500.0, 100.0, 800.0, 3, 400.0),
                thermal(1, 40.0, 1000.0, 200.0, 50.0, 800.0, 2, 400.0),
                thermal(2, 50.0, 300.0, 100.0, 20.0, 800.0, 1, 400.0),
            ],
            quickstart: vec![quick(0, 60.0), quick(1, 70.0), quick(2, 80.0)],
            reserve_fraction_up: 0.15,
            reserve_fraction_down: 0.15,
            horizon: 24,
            network: NetworkSpec {
                node_count: 3,
                lines: vec![line(0, 1), line(1, 2), line(0, 2)],
                reference_node: 0,
                load_nodes: vec![1, 2],
                base_mva: 100.0,
            },
            load_participation: vec![0.6, 0.4],
        }
    }

    pub fn validate(&self) -> Result<(), DispatchError> {
        self.network.validate().map_err(|e| DispatchError::InvalidParams(e.to_string()))?;
        if self.horizon == 0 {
            return Err(DispatchError::InvalidParams("horizon must be at least one hour".into()));
        }
        for s in [self.reserve_fraction_up, self.reserve_fraction_down] {
            if !(0.0..1.0).contains(&s) {
                return Err(DispatchError::InvalidParams(format!("reserve fraction {s} outside [0, 1)")));
            }
        }
        if self.load_participation.len() != self.network.load_count() {
            return Err(DispatchError::InvalidParams("one participation factor per load required".into()));
        }
        check_nonnegative("load_participation", &self.load_participation)?;
        let n = self.network.node_count;
        for (k, u) in self.units.iter().enumerate() {
            check_nonnegative(
                &format!("unit {k}"),
                &[
                    u.energy_cost,
                    u.up_reserve_cost,
                    u.down_reserve_cost,
                    u.startup_cost,
                    u.shutdown_cost,
                    u.p_min,
                    u.up_reserve_limit,
                    u.down_reserve_limit,
                    u.initial_output,
                ],
            )?;
            if u.node >= n || u.p_min > u.p_max || u.min_up == 0 || u.min_down == 0 || !(u.ramp_up > 0.0) || !(u.ramp_down > 0.0) {
                return Err(DispatchError::InvalidParams(format!("unit {k} is inconsistent")));
            }
        }
        for (k, q) in self.quickstart.iter().enumerate() {
            check_nonnegative(&format!("quick-start unit {k}"), &[q.energy_cost, q.startup_cost, q.shutdown_cost, q.p_min])?;
            if q.node >= n || q.p_min > q.p_max || !(q.ramp_up > 0.0) || !(q.ramp_down > 0.0) {
                return Err(DispatchError::InvalidParams(format!("quick-start unit {k} is inconsistent")));
            }
        }
        Ok(())
    }

    /// Splits a system profile onto the loads by participation factor: `[k][t]`.
    pub fn disaggregate(&self, system: &[f64]) -> Vec<Vec<f64>> {
        self.load_participation.iter().map(|a| system.iter().map(|l| a * l).collect()).collect()
    }

    /// Dynamic subset `(C, C^qs, C^U, C^D)`.
    pub fn dynamic_vector(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.units.iter().map(|u| u.energy_cost).collect();
        w.extend(self.quickstart.iter().map(|q| q.energy_cost));
        w.extend(self.units.iter().map(|u| u.up_reserve_cost));
        w.extend(self.units.iter().map(|u| u.down_reserve_cost));
        w
    }

    pub fn dynamic_names(&self) -> Vec<String> {
        let (i, j) = (self.units.len(), self.quickstart.len());
        let mut names = Vec::new();
        for (prefix, n) in [("C", i), ("C_qs", j), ("C_U", i), ("C_D", i)] {
            names.extend((0..n).map(|k| format!("{prefix}[{k}]")));
        }
        names
    }

    pub fn with_dynamic(&self, w: &[f64]) -> Result<Self, DispatchError> {
        let (i, j) = (self.units.len(), self.quickstart.len());
        if w.len() != 3 * i + j {
            return Err(DispatchError::InvalidParams(format!("dynamic vector has {} entries, expected {}", w.len(), 3 * i + j)));
        }
        let mut p = self.clone();
        for (k, u) in p.units.iter_mut().enumerate() {
            u.energy_cost = w[k];
            u.up_reserve_cost = w[i + j + k];
            u.down_reserve_cost = w[2 * i + j + k];
        }
        for (k, q) in p.quickstart.iter_mut().enumerate() {
            q.energy_cost = w[i + k];
        }
        Ok(p)
    }
}

fn check_loads(name: &str, loads: &[Vec<f64>], p: &Case2Params) -> Result<(), DispatchError> {
    if loads.len() != p.network.load_count() || loads.iter().any(|row| row.len() != p.horizon) {
        return Err(DispatchError::InvalidInput(format!(
            "{name} must be {} loads × {} hours",
            p.network.load_count(),
            p.horizon
        )));
    }
    if loads.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DispatchError::InvalidInput(format!("{name} must be finite and nonnegative")));
    }
    Ok(())
}

fn nodal_sum(loads: &[Vec<f64>], net: &NetworkSpec, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; net.node_count];
    for (k, row) in loads.iter().enumerate() {
        out[net.load_nodes[k]] += row[t];
    }
    out
}

/// Column indices of the day-ahead model.
#[derive(Debug, Clone, Copy)]
pub struct DayAheadLayout {
    pub units: usize,
    pub nodes: usize,
    pub horizon: usize,
    pub with_shed: bool,
}

impl DayAheadLayout {
    fn it(&self) -> usize {
        self.units * self.horizon
    }
    pub fn gen(&self, i: usize, t: usize) -> usize {
        i * self.horizon + t
    }
    pub fn up(&self, i: usize, t: usize) -> usize {
        self.it() + self.gen(i, t)
    }
    pub fn down(&self, i: usize, t: usize) -> usize {
        2 * self.it() + self.gen(i, t)
    }
    pub fn on(&self, i: usize, t: usize) -> usize {
        3 * self.it() + self.gen(i, t)
    }
    pub fn start(&self, i: usize, t: usize) -> usize {
        4 * self.it() + self.gen(i, t)
    }
    pub fn stop(&self, i: usize, t: usize) -> usize {
        5 * self.it() + self.gen(i, t)
    }
    pub fn angle(&self, n: usize, t: usize) -> usize {
        6 * self.it() + n * self.horizon + t
    }
    pub fn shed(&self, n: usize, t: usize) -> Option<usize> {
        self.with_shed.then(|| 6 * self.it() + (self.nodes + n) * self.horizon + t)
    }
    pub fn len(&self) -> usize {
        6 * self.it() + self.nodes * self.horizon * if self.with_shed { 2 } else { 1 }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Column indices of the real-time model.
#[derive(Debug, Clone, Copy)]
pub struct RealTimeLayout {
    pub units: usize,
    pub quickstart: usize,
    pub nodes: usize,
    pub horizon: usize,
}

impl RealTimeLayout {
    fn it(&self) -> usize {
        self.units * self.horizon
    }
    fn jt(&self) -> usize {
        self.quickstart * self.horizon
    }
    pub fn up(&self, i: usize, t: usize) -> usize {
        i * self.horizon + t
    }
    pub fn down(&self, i: usize, t: usize) -> usize {
        self.it() + i * self.horizon + t
    }
    pub fn qs_gen(&self, j: usize, t: usize) -> usize {
        2 * self.it() + j * self.horizon + t
    }
    pub fn qs_on(&self, j: usize, t: usize) -> usize {
        2 * self.it() + self.jt() + j * self.horizon + t
    }
    pub fn qs_start(&self, j: usize, t: usize) -> usize {
        2 * self.it() + 2 * self.jt() + j * self.horizon + t
    }
    pub fn qs_stop(&self, j: usize, t: usize) -> usize {
        2 * self.it() + 3 * self.jt() + j * self.horizon + t
    }
    pub fn angle(&self, n: usize, t: usize) -> usize {
        2 * self.it() + 4 * self.jt() + n * self.horizon + t
    }
    pub fn shed(&self, n: usize, t: usize) -> usize {
        2 * self.it() + 4 * self.jt() + (self.nodes + n) * self.horizon + t
    }
    pub fn spill(&self, n: usize, t: usize) -> usize {
        2 * self.it() + 4 * self.jt() + (2 * self.nodes + n) * self.horizon + t
    }
    pub fn len(&self) -> usize {
        2 * self.it() + 4 * self.jt() + 3 * self.nodes * self.horizon
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Outgoing-flow terms `(column, coefficient)` at node `n` for hour `t`.
fn outflow_terms(net: &NetworkSpec, n: usize, t: usize, angle: impl Fn(usize, usize) -> usize) -> Vec<(usize, f64)> {
    let mut terms = Vec::new();
    for line in &net.lines {
        let b = net.susceptance_mw(line);
        if line.from == n {
            terms.push((angle(line.from, t), b));
            terms.push((angle(line.to, t), -b));
        } else if line.to == n {
            terms.push((angle(line.to, t), b));
            terms.push((angle(line.from, t), -b));
        }
    }
    terms
}

/// Outgoing flow at node `n` given fixed angles `[node][t]`.
fn outflow_value(net: &NetworkSpec, n: usize, t: usize, angles: &[Vec<f64>]) -> f64 {
    outflow_terms(net, n, t, |node, _| node).iter().map(|&(node, b)| b * angles[node][t]).sum()
}

/// Day-ahead unit commitment for nodal forecasts `[k][t]`. With `voll`
/// set, each node also gets a penalized shed column.
pub fn build_uc_day_ahead(
    forecast_loads: &[Vec<f64>],
    p: &Case2Params,
    voll: Option<f64>,
) -> Result<(MixedIntegerProgram, DayAheadLayout), DispatchError> {
    p.validate()?;
    check_loads("forecast loads", forecast_loads, p)?;
    let (ni, nt, nn) = (p.units.len(), p.horizon, p.network.node_count);
    let lay = DayAheadLayout { units: ni, nodes: nn, horizon: nt, with_shed: voll.is_some() };

    let system: Vec<f64> = (0..nt).map(|t| forecast_loads.iter().map(|r| r[t]).sum()).collect();
    if voll.is_none() {
        let capacity: f64 = p.units.iter().map(|u| u.p_max).sum();
        let peak = system.iter().cloned().fold(0.0, f64::max);
        let required = peak * (1.0 + p.reserve_fraction_up);
        if required > capacity + 1e-9 {
            return Err(DispatchError::InfeasibleCapacity { capacity, required });
        }
    }

    let mut lp = LinearProgram::new(lay.len());
    let mut binaries = Vec::with_capacity(3 * ni * nt);
    for (i, u) in p.units.iter().enumerate() {
        for t in 0..nt {
            lp.objective[lay.gen(i, t)] = u.energy_cost;
            lp.objective[lay.up(i, t)] = u.up_reserve_cost;
            lp.objective[lay.down(i, t)] = u.down_reserve_cost;
            lp.objective[lay.start(i, t)] = u.startup_cost;
            lp.objective[lay.stop(i, t)] = u.shutdown_cost;
            lp.set_bounds(lay.gen(i, t), 0.0, u.p_max);
            lp.set_bounds(lay.up(i, t), 0.0, u.up_reserve_limit);
            lp.set_bounds(lay.down(i, t), 0.0, u.down_reserve_limit);
            for col in [lay.on(i, t), lay.start(i, t), lay.stop(i, t)] {
                lp.set_bounds(col, 0.0, 1.0);
                binaries.push(col);
            }
        }
    }
    for n in 0..nn {
        for t in 0..nt {
            let col = lay.angle(n, t);
            if n == p.network.reference_node {
                lp.set_bounds(col, 0.0, 0.0);
            } else {
                lp.set_bounds(col, f64::NEG_INFINITY, f64::INFINITY);
            }
            if let (Some(s), Some(v)) = (lay.shed(n, t), voll) {
                lp.objective[s] = v;
            }
        }
    }

    for t in 0..nt {
        // Nodal balance: generation (+ shed) − outgoing flows = load.
        let nodal = nodal_sum(forecast_loads, &p.network, t);
        for n in 0..nn {
            let mut terms: Vec<(usize, f64)> =
                p.units.iter().enumerate().filter(|(_, u)| u.node == n).map(|(i, _)| (lay.gen(i, t), 1.0)).collect();
            if let Some(s) = lay.shed(n, t) {
                terms.push((s, 1.0));
            }
            terms.extend(outflow_terms(&p.network, n, t, |node, hour| lay.angle(node, hour)).into_iter().map(|(c, b)| (c, -b)));
            lp.add_sparse_row(&terms, Eq, nodal[n]);
        }
        // Line limits, both directions.
        for line in &p.network.lines {
            let b = p.network.susceptance_mw(line);
            let terms = [(lay.angle(line.from, t), b), (lay.angle(line.to, t), -b)];
            lp.add_sparse_row(&terms, Le, line.capacity);
            lp.add_sparse_row(&terms, Ge, -line.capacity);
        }
        // System reserve requirements.
        let ups: Vec<_> = (0..ni).map(|i| (lay.up(i, t), 1.0)).collect();
        let downs: Vec<_> = (0..ni).map(|i| (lay.down(i, t), 1.0)).collect();
        lp.add_sparse_row(&ups, Eq, p.reserve_fraction_up * system[t]);
        lp.add_sparse_row(&downs, Eq, p.reserve_fraction_down * system[t]);
    }

    for (i, u) in p.units.iter().enumerate() {
        let initial_on = if u.initial_on { 1.0 } else { 0.0 };
        for t in 0..nt {
            // Generation limits against commitment.
            lp.add_sparse_row(&[(lay.gen(i, t), 1.0), (lay.up(i, t), 1.0), (lay.on(i, t), -u.p_max)], Le, 0.0);
            lp.add_sparse_row(&[(lay.gen(i, t), 1.0), (lay.down(i, t), -1.0), (lay.on(i, t), -u.p_min)], Ge, 0.0);
            // U − D = I_t − I_{t−1}.
            let mut logic = vec![(lay.start(i, t), 1.0), (lay.stop(i, t), -1.0), (lay.on(i, t), -1.0)];
            let rhs = if t == 0 {
                -initial_on
            } else {
                logic.push((lay.on(i, t - 1), 1.0));
                0.0
            };
            lp.add_sparse_row(&logic, Eq, rhs);
            // Min up / min down over windows truncated at the horizon start.
            let from = (t + 1).saturating_sub(u.min_up);
            let mut window: Vec<_> = (from..=t).map(|s| (lay.start(i, s), 1.0)).collect();
            window.push((lay.on(i, t), -1.0));
            lp.add_sparse_row(&window, Le, 0.0);
            let from = (t + 1).saturating_sub(u.min_down);
            let mut window: Vec<_> = (from..=t).map(|s| (lay.stop(i, s), 1.0)).collect();
            window.push((lay.on(i, t), 1.0));
            lp.add_sparse_row(&window, Le, 1.0);
            // Ramps.
            if t == 0 {
                lp.add_sparse_row(&[(lay.gen(i, 0), 1.0)], Le, u.ramp_up + u.initial_output);
                lp.add_sparse_row(&[(lay.gen(i, 0), -1.0)], Le, u.ramp_down - u.initial_output);
            } else {
                lp.add_sparse_row(&[(lay.gen(i, t), 1.0), (lay.gen(i, t - 1), -1.0)], Le, u.ramp_up);
                lp.add_sparse_row(&[(lay.gen(i, t - 1), 1.0), (lay.gen(i, t), -1.0)], Le, u.ramp_down);
            }
        }
    }
    Ok((MixedIntegerProgram::new(lp, binaries), lay))
}

type Grid = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcOutcome {
    pub generation: Grid,
    pub up_reserve: Grid,
    pub down_reserve: Grid,
    pub commitment: Grid,
    pub startup: Grid,
    pub shutdown: Grid,
    /// `[node][t]` in radians.
    pub angles: Grid,
    /// `[node][t]`; all zero unless the day-ahead shed option is on.
    pub shed: Grid,
    pub cost: f64,
    pub gap: f64,
    pub nodes_explored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtOutcome {
    pub up_activation: Grid,
    pub down_activation: Grid,
    pub quickstart: Grid,
    pub quickstart_on: Grid,
    pub quickstart_start: Grid,
    pub quickstart_stop: Grid,
    pub angles: Grid,
    pub shed: Grid,
    pub spill: Grid,
    pub cost: f64,
    pub gap: f64,
}

fn grid(x: &[f64], rows: usize, nt: usize, col: impl Fn(usize, usize) -> usize) -> Grid {
    (0..rows).map(|r| (0..nt).map(|t| x[col(r, t)]).collect()).collect()
}

fn solve_checked(mip: &MixedIntegerProgram, opts: &SolverOptions, stage: &'static str) -> Result<crate::solver::MilpSolution, DispatchError> {
    let sol = solve_milp(mip, opts)?;
    match sol.status {
        MilpStatus::Infeasible => Err(DispatchError::Infeasible { stage }),
        MilpStatus::Optimal | MilpStatus::GapLimit => Ok(sol),
    }
}

pub fn solve_uc_day_ahead(
    forecast_loads: &[Vec<f64>],
    p: &Case2Params,
    voll: Option<f64>,
    opts: &SolverOptions,
) -> Result<UcOutcome, DispatchError> {
    let (mip, lay) = build_uc_day_ahead(forecast_loads, p, voll)?;
    let sol = solve_checked(&mip, opts, "day-ahead")?;
    let x = &sol.primal;
    let (ni, nn, nt) = (lay.units, lay.nodes, lay.horizon);
    Ok(UcOutcome {
        generation: grid(x, ni, nt, |i, t| lay.gen(i, t)),
        up_reserve: grid(x, ni, nt, |i, t| lay.up(i, t)),
        down_reserve: grid(x, ni, nt, |i, t| lay.down(i, t)),
        commitment: grid(x, ni, nt, |i, t| lay.on(i, t)),
        startup: grid(x, ni, nt, |i, t| lay.start(i, t)),
        shutdown: grid(x, ni, nt, |i, t| lay.stop(i, t)),
        angles: grid(x, nn, nt, |n, t| lay.angle(n, t)),
        shed: match lay.with_shed {
            true => grid(x, nn, nt, |n, t| lay.shed(n, t).unwrap()),
            false => vec![vec![0.0; nt]; nn],
        },
        cost: sol.objective,
        gap: sol.gap,
        nodes_explored: sol.nodes_explored,
    })
}

/// Fixed day-ahead quantities the real-time stage is built around.
#[derive(Debug, Clone, Copy)]
pub struct DayAheadFixings<'a> {
    pub angles: &'a [Vec<f64>],
    pub up_reserve: &'a [Vec<f64>],
    pub down_reserve: &'a [Vec<f64>],
}

impl<'a> From<&'a UcOutcome> for DayAheadFixings<'a> {
    fn from(o: &'a UcOutcome) -> Self {
        Self { angles: &o.angles, up_reserve: &o.up_reserve, down_reserve: &o.down_reserve }
    }
}

pub fn build_uc_real_time(
    true_loads: &[Vec<f64>],
    forecast_loads: &[Vec<f64>],
    fixed: DayAheadFixings<'_>,
    p: &Case2Params,
    voll: f64,
) -> Result<(MixedIntegerProgram, RealTimeLayout), DispatchError> {
    p.validate()?;
    check_loads("true loads", true_loads, p)?;
    check_loads("forecast loads", forecast_loads, p)?;
    let (ni, nj, nt, nn) = (p.units.len(), p.quickstart.len(), p.horizon, p.network.node_count);
    let shape_ok = |g: &[Vec<f64>], rows: usize| g.len() == rows && g.iter().all(|r| r.len() == nt);
    if !shape_ok(fixed.angles, nn) || !shape_ok(fixed.up_reserve, ni) || !shape_ok(fixed.down_reserve, ni) {
        return Err(DispatchError::InvalidInput("day-ahead fixings have the wrong shape".into()));
    }
    let lay = RealTimeLayout { units: ni, quickstart: nj, nodes: nn, horizon: nt };
    let mut lp = LinearProgram::new(lay.len());
    let mut binaries = Vec::with_capacity(3 * nj * nt);

    for (i, u) in p.units.iter().enumerate() {
        for t in 0..nt {
            lp.objective[lay.up(i, t)] = u.energy_cost;
            lp.objective[lay.down(i, t)] = -u.energy_cost;
            lp.set_bounds(lay.up(i, t), 0.0, fixed.up_reserve[i][t].max(0.0));
            lp.set_bounds(lay.down(i, t), 0.0, fixed.down_reserve[i][t].max(0.0));
        }
    }
    for (j, q) in p.quickstart.iter().enumerate() {
        for t in 0..nt {
            lp.objective[lay.qs_gen(j, t)] = q.energy_cost;
            lp.objective[lay.qs_start(j, t)] = q.startup_cost;
            lp.objective[lay.qs_stop(j, t)] = q.shutdown_cost;
            lp.set_bounds(lay.qs_gen(j, t), 0.0, q.p_max);
            for col in [lay.qs_on(j, t), lay.qs_start(j, t), lay.qs_stop(j, t)] {
                lp.set_bounds(col, 0.0, 1.0);
                binaries.push(col);
            }
        }
    }
    for n in 0..nn {
        for t in 0..nt {
            let col = lay.angle(n, t);
            if n == p.network.reference_node {
                lp.set_bounds(col, 0.0, 0.0);
            } else {
                lp.set_bounds(col, f64::NEG_INFINITY, f64::INFINITY);
            }
            lp.objective[lay.shed(n, t)] = voll;
            lp.objective[lay.spill(n, t)] = voll;
        }
    }

    for t in 0..nt {
        let truth = nodal_sum(true_loads, &p.network, t);
        let forecast = nodal_sum(forecast_loads, &p.network, t);
        for n in 0..nn {
            // Deviation balance: activations + quick-start + shed − spill
            //   − (outflow(δ^RT) − outflow(δ^DA*)) = L − L̂ at node n.
            let mut terms = Vec::new();
            for (i, _) in p.units.iter().enumerate().filter(|(_, u)| u.node == n) {
                terms.push((lay.up(i, t), 1.0));
                terms.push((lay.down(i, t), -1.0));
            }
            for (j, _) in p.quickstart.iter().enumerate().filter(|(_, q)| q.node == n) {
                terms.push((lay.qs_gen(j, t), 1.0));
            }
            terms.push((lay.shed(n, t), 1.0));
            terms.push((lay.spill(n, t), -1.0));
            terms.extend(outflow_terms(&p.network, n, t, |node, hour| lay.angle(node, hour)).into_iter().map(|(c, b)| (c, -b)));
            let rhs = truth[n] - forecast[n] - outflow_value(&p.network, n, t, fixed.angles);
            lp.add_sparse_row(&terms, Eq, rhs);
        }
        for line in &p.network.lines {
            let b = p.network.susceptance_mw(line);
            let terms = [(lay.angle(line.from, t), b), (lay.angle(line.to, t), -b)];
            lp.add_sparse_row(&terms, Le, line.capacity);
            lp.add_sparse_row(&terms, Ge, -line.capacity);
        }
    }
    for (j, q) in p.quickstart.iter().enumerate() {
        for t in 0..nt {
            lp.add_sparse_row(&[(lay.qs_gen(j, t), 1.0), (lay.qs_on(j, t), -q.p_max)], Le, 0.0);
            lp.add_sparse_row(&[(lay.qs_gen(j, t), 1.0), (lay.qs_on(j, t), -q.p_min)], Ge, 0.0);
            let mut logic = vec![(lay.qs_start(j, t), 1.0), (lay.qs_stop(j, t), -1.0), (lay.qs_on(j, t), -1.0)];
            if t > 0 {
                logic.push((lay.qs_on(j, t - 1), 1.0));
            }
            lp.add_sparse_row(&logic, Eq, 0.0);
            // A unit cannot start and stop in the same hour.
            lp.add_sparse_row(&[(lay.qs_start(j, t), 1.0), (lay.qs_stop(j, t), 1.0)], Le, 1.0);
            if t == 0 {
                lp.add_sparse_row(&[(lay.qs_gen(j, 0), 1.0)], Le, q.ramp_up);
            } else {
                lp.add_sparse_row(&[(lay.qs_gen(j, t), 1.0), (lay.qs_gen(j, t - 1), -1.0)], Le, q.ramp_up);
                lp.add_sparse_row(&[(lay.qs_gen(j, t - 1), 1.0), (lay.qs_gen(j, t), -1.0)], Le, q.ramp_down);
            }
        }
    }
    Ok((MixedIntegerProgram::new(lp, binaries), lay))
}

pub fn solve_uc_real_time(
    true_loads: &[Vec<f64>],
    forecast_loads: &[Vec<f64>],
    day_ahead: &UcOutcome,
    p: &Case2Params,
    voll: f64,
    opts: &SolverOptions,
) -> Result<RtOutcome, DispatchError> {
    let (mip, lay) = build_uc_real_time(true_loads, forecast_loads, day_ahead.into(), p, voll)?;
    let sol = solve_checked(&mip, opts, "real-time")?;
    let x = &sol.primal;
    let (ni, nj, nn, nt) = (lay.units, lay.quickstart, lay.nodes, lay.horizon);
    Ok(RtOutcome {
        up_activation: grid(x, ni, nt, |i, t| lay.up(i, t)),
        down_activation: grid(x, ni, nt, |i, t| lay.down(i, t)),
        quickstart: grid(x, nj, nt, |j, t| lay.qs_gen(j, t)),
        quickstart_on: grid(x, nj, nt, |j, t| lay.qs_on(j, t)),
        quickstart_start: grid(x, nj, nt, |j, t| lay.qs_start(j, t)),
        quickstart_stop: grid(x, nj, nt, |j, t| lay.qs_stop(j, t)),
        angles: grid(x, nn, nt, |n, t| lay.angle(n, t)),
        shed: grid(x, nn, nt, |n, t| lay.shed(n, t)),
        spill: grid(x, nn, nt, |n, t| lay.spill(n, t)),
        cost: sol.objective,
        gap: sol.gap,
    })
}

/// Two-stage cost for system profiles (length = horizon), disaggregated by
/// participation factors.
pub fn evaluate_two_stage_case2(
    forecast: &[f64],
    truth: &[f64],
    p: &Case2Params,
    voll: f64,
    day_ahead_shed: bool,
    opts: &SolverOptions,
) -> Result<CostBreakdown, DispatchError> {
    let (_, _, c) = evaluate_detailed(forecast, truth, p, voll, day_ahead_shed, opts)?;
    Ok(c)
}

pub fn evaluate_detailed(
    forecast: &[f64],
    truth: &[f64],
    p: &Case2Params,
    voll: f64,
    day_ahead_shed: bool,
    opts: &SolverOptions,
) -> Result<(UcOutcome, RtOutcome, CostBreakdown), DispatchError> {
    if forecast.len() != p.horizon || truth.len() != p.horizon {
        return Err(DispatchError::InvalidInput(format!("profiles must have {} hours", p.horizon)));
    }
    let fl = p.disaggregate(forecast);
    let tl = p.disaggregate(truth);
    let da = solve_uc_day_ahead(&fl, p, day_ahead_shed.then_some(voll), opts)?;
    let rt = solve_uc_real_time(&tl, &fl, &da, p, voll, opts)?;
    let shed: f64 = rt.shed.iter().chain(&rt.spill).flatten().sum();
    let c = CostBreakdown::new(da.cost, rt.cost, shed);
    Ok((da, rt, c))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Case2Model {
    pub params: Case2Params,
    #[serde(default = "default_voll")]
    pub voll: f64,
    /// Add penalized shed columns to the day-ahead stage as well.
    #[serde(default)]
    pub day_ahead_shed: bool,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(skip)]
    counter: SolveCounter,
}

fn default_voll() -> f64 {
    super::case1::DEFAULT_VOLL
}

impl Case2Model {
    pub fn new(params: Case2Params) -> Self {
        Self { params, voll: default_voll(), day_ahead_shed: false, solver: SolverOptions::default(), counter: SolveCounter::default() }
    }
}

impl TwoStageModel for Case2Model {
    fn forecast_dim(&self) -> usize {
        self.params.horizon
    }

    fn nominal_params(&self) -> Vec<f64> {
        self.params.dynamic_vector()
    }

    fn param_names(&self) -> Vec<String> {
        self.params.dynamic_names()
    }

    fn evaluate(&self, params: &[f64], forecast: &[f64], truth: &[f64]) -> Result<CostBreakdown, DispatchError> {
        let p = self.params.with_dynamic(params)?;
        if forecast.len() != p.horizon || truth.len() != p.horizon {
            return Err(DispatchError::InvalidInput(format!("profiles must have {} hours", p.horizon)));
        }
        let fl = p.disaggregate(forecast);
        let tl = p.disaggregate(truth);
        self.counter.bump();
        let da = solve_uc_day_ahead(&fl, &p, self.day_ahead_shed.then_some(self.voll), &self.solver)?;
        self.counter.bump();
        let rt = solve_uc_real_time(&tl, &fl, &da, &p, self.voll, &self.solver)?;
        let shed: f64 = rt.shed.iter().chain(&rt.spill).flatten().sum();
        Ok(CostBreakdown::new(da.cost, rt.cost, shed))
    }

    fn solve_count(&self) -> u64 {
        self.counter.get()
    }
}
