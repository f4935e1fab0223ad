//! Bounded-variable primal simplex on a dense tableau.
//!
//! Every column is shifted (or mirrored, or split) so that it lives in
//! `[0, u]` with `u` possibly infinite. Rows are scaled to unit max-norm and
//! sign-flipped to a nonnegative right-hand side; rows whose slack cannot
//! start basic get an artificial column. Phase 1 minimizes the artificial
//! sum, phase 2 the real objective. Artificials that stay basic after phase 1
//! mark redundant rows and are frozen at zero.

#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use super::{SolverError, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintSense {
    Le,
    Eq,
    Ge,
}

/// `min c·x` subject to `A x {≤,=,≥} b` and `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub senses: Vec<ConstraintSense>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// An LP over `n` nonnegative, unbounded-above columns with zero cost.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            rows: Vec::new(),
            rhs: Vec::new(),
            senses: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) {
        self.lower[col] = lower;
        self.upper[col] = upper;
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: ConstraintSense, rhs: f64) -> usize {
        self.rows.push(coeffs);
        self.senses.push(sense);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    /// Adds a row from `(column, coefficient)` pairs; repeated columns accumulate.
    pub fn add_sparse_row(&mut self, terms: &[(usize, f64)], sense: ConstraintSense, rhs: f64) -> usize {
        let mut row = vec![0.0; self.num_vars()];
        for &(j, a) in terms {
            row[j] += a;
        }
        self.add_row(row, sense, rhs)
    }

    /// Largest violation of rows and bounds by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, (&b, &s)) in self.rows.iter().zip(self.rhs.iter().zip(&self.senses)) {
            let ax: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match s {
                ConstraintSense::Le => ax - b,
                ConstraintSense::Ge => b - ax,
                ConstraintSense::Eq => (ax - b).abs(),
            };
            worst = worst.max(v);
        }
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.objective.len();
        let m = self.rows.len();
        if self.rhs.len() != m || self.senses.len() != m {
            return Err(SolverError::DimensionMismatch(format!(
                "{} rows but {} rhs entries and {} senses",
                m,
                self.rhs.len(),
                self.senses.len()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(SolverError::DimensionMismatch(format!(
                "{} columns but {} lower and {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != n {
                return Err(SolverError::DimensionMismatch(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|a| !a.is_finite()) || !self.rhs[i].is_finite() {
                return Err(SolverError::NonFinite(format!("row {i}")));
            }
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(SolverError::NonFinite(format!("objective coefficient {j}")));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(SolverError::InvalidBounds { column: j, lower: l, upper: u });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values in the original column space (empty unless Optimal).
    pub primal: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `c = Aᵀy + d` (empty unless Optimal).
    pub duals: Vec<f64>,
    /// Bound multipliers `d = c − Aᵀy` (empty unless Optimal).
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        let objective = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            primal: Vec::new(),
            objective,
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// How an original column maps into internal `[0, u]` columns.
#[derive(Debug, Clone, Copy)]
enum ColumnMap {
    /// `x = lower + x'`
    Shift { col: usize, lower: f64 },
    /// `x = upper − x'`
    Mirror { col: usize, upper: f64 },
    /// `x = x⁺ − x⁻`
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColState {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// `B⁻¹A`, row-major `m × ncols`.
    a: Vec<f64>,
    /// `B⁻¹b` with every nonbasic column at zero.
    rhs: Vec<f64>,
    /// Current values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColState>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    /// Columns that may never enter (frozen artificials).
    blocked: Vec<bool>,
    iterations: usize,
    max_iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.ncols + j]
    }

    fn value_of_nonbasic(&self, j: usize) -> f64 {
        match self.state[j] {
            ColState::AtUpper => self.upper[j],
            _ => 0.0,
        }
    }

    fn refresh_beta(&mut self) {
        for i in 0..self.m {
            let mut v = self.rhs[i];
            let row = &self.a[i * self.ncols..(i + 1) * self.ncols];
            for j in 0..self.ncols {
                if self.state[j] == ColState::AtUpper {
                    v -= row[j] * self.upper[j];
                }
            }
            self.beta[i] = v;
        }
    }

    fn refresh_reduced_costs(&mut self) {
        for j in 0..self.ncols {
            let mut d = self.cost[j];
            for i in 0..self.m {
                let cb = self.cost[self.basis[i]];
                if cb != 0.0 {
                    d -= cb * self.at(i, j);
                }
            }
            self.reduced[j] = d;
        }
        for &b in &self.basis {
            self.reduced[b] = 0.0;
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.ncols;
        let p = self.a[r * n + q];
        {
            let row = &mut self.a[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[q] = 1.0;
        }
        self.rhs[r] /= p;
        let pivot_row: Vec<(usize, f64)> =
            self.a[r * n..(r + 1) * n].iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * n + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * n..(i + 1) * n];
            for &(j, pr) in &pivot_row {
                row[j] -= f * pr;
            }
            row[q] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for &(j, pr) in &pivot_row {
                self.reduced[j] -= f * pr;
            }
        }
        self.reduced[q] = 0.0;
        // Caller sets the leaving column's bound state.
        self.basis[r] = q;
        self.state[q] = ColState::Basic;
    }

    fn run(&mut self, opts: &SolverOptions) -> Result<Outcome, SolverError> {
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run >= opts.degenerate_streak;

            // Entering column: most-negative (signed) reduced cost, lowest index on ties.
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.ncols {
                if self.blocked[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                let d = self.reduced[j];
                let score = match self.state[j] {
                    ColState::Basic => continue,
                    ColState::AtLower if d < -opts.opt_tol => -d,
                    ColState::AtUpper if d > opts.opt_tol => d,
                    _ => continue,
                };
                if bland {
                    entering = Some((j, score));
                    break;
                }
                if entering.is_none_or(|(_, best)| score > best) {
                    entering = Some((j, score));
                }
            }
            let Some((q, _)) = entering else {
                return Ok(Outcome::Optimal);
            };

            if self.iterations >= self.max_iterations {
                return Err(SolverError::IterationLimit(self.max_iterations));
            }
            self.iterations += 1;

            let dir = if self.state[q] == ColState::AtLower { 1.0 } else { -1.0 };

            // Ratio test.
            let mut leave: Option<(usize, f64, f64)> = None; // (row, ratio, alpha)
            for i in 0..self.m {
                let alpha = dir * self.at(i, q);
                let ratio = if alpha > opts.pivot_tol {
                    self.beta[i].max(0.0) / alpha
                } else if alpha < -opts.pivot_tol {
                    let ub = self.upper[self.basis[i]];
                    if ub.is_infinite() {
                        continue;
                    }
                    (ub - self.beta[i]).max(0.0) / -alpha
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((r, best, best_alpha)) => {
                        if ratio < best - 1e-12 {
                            true
                        } else if ratio <= best + 1e-12 {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                alpha.abs() > best_alpha.abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((i, ratio, alpha));
                }
            }

            let flip = self.upper[q];
            let theta = match leave {
                Some((_, ratio, _)) if ratio < flip => ratio,
                _ if flip.is_finite() => flip,
                _ => return Ok(Outcome::Unbounded),
            };

            if theta <= 1e-9 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            let entering_value = self.value_of_nonbasic(q) + dir * theta;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a != 0.0 {
                    self.beta[i] -= dir * theta * a;
                }
            }

            match leave {
                Some((r, ratio, alpha)) if ratio < flip => {
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.state[leaving] = if alpha > 0.0 { ColState::AtLower } else { ColState::AtUpper };
                    self.beta[r] = entering_value;
                }
                _ => {
                    self.state[q] = if dir > 0.0 { ColState::AtUpper } else { ColState::AtLower };
                }
            }
        }
    }
}

/// Solves `lp` to optimality or proves it infeasible/unbounded.
pub fn solve_lp(lp: &LinearProgram, opts: &SolverOptions) -> Result<LpSolution, SolverError> {
    lp.validate()?;
    let n = lp.num_vars();
    let m = lp.num_rows();

    // Column transformation into [0, u].
    let mut maps = Vec::with_capacity(n);
    let mut upper = Vec::new();
    let mut cost = Vec::new();
    for j in 0..n {
        let (l, u, c) = (lp.lower[j], lp.upper[j], lp.objective[j]);
        if l.is_finite() {
            maps.push(ColumnMap::Shift { col: upper.len(), lower: l });
            upper.push(u - l);
            cost.push(c);
        } else if u.is_finite() {
            maps.push(ColumnMap::Mirror { col: upper.len(), upper: u });
            upper.push(f64::INFINITY);
            cost.push(-c);
        } else {
            maps.push(ColumnMap::Split { pos: upper.len(), neg: upper.len() + 1 });
            upper.extend([f64::INFINITY, f64::INFINITY]);
            cost.extend([c, -c]);
        }
    }
    let n_struct = upper.len();

    // Internal structural rows and right-hand sides.
    let mut rows = vec![vec![0.0; n_struct]; m];
    let mut rhs = lp.rhs.clone();
    for i in 0..m {
        for j in 0..n {
            let a = lp.rows[i][j];
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                ColumnMap::Shift { col, lower } => {
                    rows[i][col] = a;
                    rhs[i] -= a * lower;
                }
                ColumnMap::Mirror { col, upper } => {
                    rows[i][col] = -a;
                    rhs[i] -= a * upper;
                }
                ColumnMap::Split { pos, neg } => {
                    rows[i][pos] = a;
                    rows[i][neg] = -a;
                }
            }
        }
    }

    // Row scaling and sign normalization; `row_factor[i]` maps original row i
    // onto internal row i.
    let mut row_factor = vec![1.0; m];
    for i in 0..m {
        let scale = rows[i].iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        row_factor[i] = 1.0 / scale;
    }

    let n_slack = lp.senses.iter().filter(|s| **s != ConstraintSense::Eq).count();
    // Decide initial basis column per row; count artificials.
    let mut slack_col = vec![None; m];
    let mut next = n_struct;
    for i in 0..m {
        if lp.senses[i] != ConstraintSense::Eq {
            slack_col[i] = Some(next);
            next += 1;
        }
    }
    let mut needs_artificial = vec![false; m];
    let mut flip = vec![false; m];
    for i in 0..m {
        let b = rhs[i] * row_factor[i];
        flip[i] = b < 0.0;
        let slack_sign = match lp.senses[i] {
            ConstraintSense::Le => 1.0,
            ConstraintSense::Ge => -1.0,
            ConstraintSense::Eq => 0.0,
        };
        let effective = if flip[i] { -slack_sign } else { slack_sign };
        needs_artificial[i] = effective <= 0.0;
        if flip[i] {
            row_factor[i] = -row_factor[i];
        }
    }
    let n_art = needs_artificial.iter().filter(|x| **x).count();
    let ncols = n_struct + n_slack + n_art;

    let mut t = Tableau {
        m,
        ncols,
        a: vec![0.0; m * ncols],
        rhs: vec![0.0; m],
        beta: vec![0.0; m],
        basis: vec![0; m],
        state: vec![ColState::AtLower; ncols],
        upper: Vec::with_capacity(ncols),
        cost: vec![0.0; ncols],
        reduced: vec![0.0; ncols],
        blocked: vec![false; ncols],
        iterations: 0,
        max_iterations: opts.max_iterations.unwrap_or_else(|| (50 * (m + ncols)).max(10_000)),
    };
    t.upper.extend_from_slice(&upper);
    t.upper.extend(std::iter::repeat_n(f64::INFINITY, n_slack + n_art));

    let mut init_col = vec![0usize; m];
    let mut art = n_struct + n_slack;
    let mut artificial_cols = Vec::with_capacity(n_art);
    for i in 0..m {
        let f = row_factor[i];
        for j in 0..n_struct {
            t.a[i * ncols + j] = rows[i][j] * f;
        }
        t.rhs[i] = rhs[i] * f;
        if let Some(s) = slack_col[i] {
            let sign = if lp.senses[i] == ConstraintSense::Le { 1.0 } else { -1.0 };
            t.a[i * ncols + s] = sign * f.signum();
        }
        if needs_artificial[i] {
            t.a[i * ncols + art] = 1.0;
            init_col[i] = art;
            artificial_cols.push(art);
            art += 1;
        } else {
            init_col[i] = slack_col[i].expect("rows without artificial have a slack");
        }
        t.basis[i] = init_col[i];
        t.state[init_col[i]] = ColState::Basic;
    }
    // Slack columns carry ±1 in the scaled row (a rescaled slack is still a slack).
    t.refresh_beta();

    // Phase 1.
    if n_art > 0 {
        for &c in &artificial_cols {
            t.cost[c] = 1.0;
        }
        t.refresh_reduced_costs();
        t.run(opts)?;
        t.refresh_beta();
        let infeasibility: f64 = (0..m)
            .filter(|&i| artificial_cols.contains(&t.basis[i]))
            .map(|i| t.beta[i].max(0.0))
            .sum();
        let bnorm = t.rhs.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if infeasibility > opts.feas_tol * bnorm {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, t.iterations));
        }
        // Drive basic artificials out where possible.
        for r in 0..m {
            if !artificial_cols.contains(&t.basis[r]) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n_struct + n_slack {
                if t.state[j] == ColState::Basic {
                    continue;
                }
                let a = t.at(r, j).abs();
                if a > opts.pivot_tol * 1e3 && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            if let Some((q, _)) = best {
                let value = t.value_of_nonbasic(q);
                let leaving = t.basis[r];
                t.pivot(r, q);
                t.state[leaving] = ColState::AtLower;
                t.beta[r] = value;
            }
        }
        for &c in &artificial_cols {
            t.upper[c] = 0.0;
            t.blocked[c] = true;
            t.cost[c] = 0.0;
        }
        t.refresh_beta();
    }

    // Phase 2.
    t.cost[..n_struct].copy_from_slice(&cost);
    t.refresh_reduced_costs();
    if let Outcome::Unbounded = t.run(opts)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, t.iterations));
    }
    t.refresh_beta();

    // Recover internal values.
    let mut internal = vec![0.0; ncols];
    for j in 0..ncols {
        internal[j] = t.value_of_nonbasic(j);
    }
    for i in 0..m {
        let b = t.basis[i];
        internal[b] = t.beta[i].clamp(0.0, t.upper[b]);
    }
    let primal: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            ColumnMap::Shift { col, lower } => lower + internal[col],
            ColumnMap::Mirror { col, upper } => upper - internal[col],
            ColumnMap::Split { pos, neg } => internal[pos] - internal[neg],
        })
        .collect();
    let objective = lp.objective.iter().zip(&primal).map(|(c, x)| c * x).sum();

    // The initial basis is the identity, so its columns now hold B⁻¹ and
    // y_internal = c_Bᵀ B⁻¹.
    let mut duals = vec![0.0; m];
    for i in 0..m {
        let col = init_col[i];
        let mut y = 0.0;
        for k in 0..m {
            let cb = t.cost[t.basis[k]];
            if cb != 0.0 {
                y += cb * t.at(k, col);
            }
        }
        duals[i] = y * row_factor[i];
    }
    let reduced_costs = (0..n)
        .map(|j| {
            let ay: f64 = (0..m).map(|i| lp.rows[i][j] * duals[i]).sum();
            lp.objective[j] - ay
        })
        .collect();

    Ok(LpSolution {
        status: LpStatus::Optimal,
        primal,
        objective,
        duals,
        reduced_costs,
        iterations: t.iterations,
    })
}
