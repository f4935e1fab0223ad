//! Brute-force oracles shared by the integration and acceptance suites.
//! Nothing here calls into the simplex implementation except the binary
//! enumerators, which price each fixed assignment with an LP solve.

#![allow(dead_code)]

pub mod nets;
pub mod uc;

use adol_core::solver::{solve_lp, ConstraintSense, LinearProgram, LpStatus, MixedIntegerProgram, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleStatus {
    Optimal(f64),
    Infeasible,
}

/// Solves the square system `m x = rhs` by Gaussian elimination with partial
/// pivoting; `None` when (numerically) singular.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-9 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 && idx[0] == n - k {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn rank(rows: &[Vec<f64>]) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let cols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())) else {
            break;
        };
        if m[p][c].abs() < 1e-9 {
            continue;
        }
        m.swap(r, p);
        for i in r + 1..m.len() {
            let f = m[i][c] / m[r][c];
            for j in c..cols {
                m[i][j] -= f * m[r][j];
            }
        }
        r += 1;
    }
    r
}

/// Enumerates every basic point of an LP with a finite box: a linearly
/// independent subset of the equality rows is always active, the remaining
/// active set is drawn from inequality rows and bounds. Dependent equalities
/// are enforced by the final feasibility check. Returns the best feasible
/// vertex objective.
pub fn vertex_enumeration(lp: &LinearProgram, tol: f64) -> OracleStatus {
    let n = lp.num_vars();
    let mut eq: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..lp.num_rows() {
        let row = (lp.rows[i].clone(), lp.rhs[i]);
        match lp.senses[i] {
            ConstraintSense::Eq => {
                let mut rows: Vec<Vec<f64>> = eq.iter().map(|r| r.0.clone()).collect();
                rows.push(row.0.clone());
                if rank(&rows) > eq.len() {
                    eq.push(row);
                }
            }
            _ => ineq.push(row),
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        ineq.push((e.clone(), lp.lower[j]));
        ineq.push((e, lp.upper[j]));
    }
    let free = n - eq.len();
    let mut best = f64::INFINITY;
    combinations(ineq.len(), free, |pick| {
        let mut m: Vec<Vec<f64>> = eq.iter().map(|r| r.0.clone()).collect();
        let mut r: Vec<f64> = eq.iter().map(|r| r.1).collect();
        for &i in pick {
            m.push(ineq[i].0.clone());
            r.push(ineq[i].1);
        }
        if let Some(x) = gauss_solve(m, r) {
            if lp.max_violation(&x) <= tol {
                best = best.min(dot(&lp.objective, &x));
            }
        }
    });
    if best.is_finite() {
        OracleStatus::Optimal(best)
    } else {
        OracleStatus::Infeasible
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random small LP with integer data and a finite box.
pub fn random_box_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=6);
    let mut lp = LinearProgram::new(n);
    lp.objective = (0..n).map(|_| rng.random_range(-5..=5) as f64).collect();
    for j in 0..n {
        let l = rng.random_range(-5..=0) as f64;
        let width = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(1..=10) as f64 };
        lp.set_bounds(j, l, l + width);
    }
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-5..=5) as f64).collect();
        let sense = match rng.random_range(0..5) {
            0 => ConstraintSense::Eq,
            1 | 2 => ConstraintSense::Le,
            _ => ConstraintSense::Ge,
        };
        let rhs = rng.random_range(-10..=10) as f64;
        lp.add_row(row, sense, rhs);
    }
    lp
}

/// Random MILP: up to 12 binaries plus up to 6 bounded continuous columns.
pub fn random_milp(rng: &mut ChaCha8Rng) -> MixedIntegerProgram {
    let nb = rng.random_range(1..=12);
    let nc = rng.random_range(0..=6);
    let n = nb + nc;
    let m = rng.random_range(1..=6);
    let mut lp = LinearProgram::new(n);
    lp.objective = (0..n).map(|_| rng.random_range(-10..=10) as f64 + rng.random_range(0..4) as f64 * 0.25).collect();
    for j in 0..nb {
        lp.set_bounds(j, 0.0, 1.0);
    }
    for j in nb..n {
        lp.set_bounds(j, 0.0, rng.random_range(1..=8) as f64);
    }
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.7) { rng.random_range(-6..=6) as f64 } else { 0.0 }).collect();
        let sense = match rng.random_range(0..6) {
            0 => ConstraintSense::Eq,
            1..=3 => ConstraintSense::Le,
            _ => ConstraintSense::Ge,
        };
        let rhs = rng.random_range(-6..=12) as f64;
        lp.add_row(row, sense, rhs);
    }
    MixedIntegerProgram::new(lp, (0..nb).collect())
}

/// Exhaustive binary enumeration, pricing each assignment with an LP solve.
pub fn enumerate_binaries(mip: &MixedIntegerProgram) -> OracleStatus {
    let k = mip.binaries.len();
    assert!(k <= 16, "enumeration oracle is for small instances");
    let mut best = f64::INFINITY;
    let mut lp = mip.base.clone();
    let opts = SolverOptions::default();
    for mask in 0u32..(1u32 << k) {
        let mut ok = true;
        for (bit, &j) in mip.binaries.iter().enumerate() {
            let v = ((mask >> bit) & 1) as f64;
            if v < mip.base.lower[j] || v > mip.base.upper[j] {
                ok = false;
            }
            lp.lower[j] = v;
            lp.upper[j] = v;
        }
        if !ok {
            continue;
        }
        let s = solve_lp(&lp, &opts).expect("oracle LP solve");
        if s.status == LpStatus::Optimal {
            best = best.min(s.objective);
        }
    }
    if best.is_finite() {
        OracleStatus::Optimal(best)
    } else {
        OracleStatus::Infeasible
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central finite difference of a scalar function along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
