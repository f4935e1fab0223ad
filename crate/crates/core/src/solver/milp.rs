//! Best-bound branch-and-bound over binary columns.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
use super::{SolverError, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedIntegerProgram {
    pub base: LinearProgram,
    /// Column indices restricted to {0, 1}.
    pub binaries: Vec<usize>,
}

impl MixedIntegerProgram {
    pub fn new(base: LinearProgram, mut binaries: Vec<usize>) -> Self {
        binaries.sort_unstable();
        binaries.dedup();
        Self { base, binaries }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.base.validate()?;
        let n = self.base.num_vars();
        for &j in &self.binaries {
            if j >= n {
                return Err(SolverError::DimensionMismatch(format!(
                    "binary index {j} out of range for {n} columns"
                )));
            }
            let (l, u) = (self.base.lower[j], self.base.upper[j]);
            if l < 0.0 || u > 1.0 {
                return Err(SolverError::InvalidBounds { column: j, lower: l, upper: u });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    /// Budget exhausted; `primal` is the best incumbent and `gap` its proven gap.
    GapLimit,
}

/// One solved node of the search tree (kept only with `record_nodes`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub depth: usize,
    /// Relaxation objective, `+∞` when the relaxation was infeasible.
    pub bound: f64,
    /// Incumbent objective at the time the node was decided.
    pub incumbent: f64,
    pub pruned: bool,
    pub integral: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    /// Relative gap between incumbent and best remaining bound.
    pub gap: f64,
    pub nodes_explored: usize,
    pub nodes: Vec<NodeRecord>,
}

struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    /// Binary fixings `(column, value)` along the path from the root.
    fixings: Vec<(usize, f64)>,
    primal: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: reverse so the lowest bound (then lowest id) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

/// Most-fractional binary, lowest index on ties; `None` when all are integral.
fn branching_column(binaries: &[usize], x: &[f64], int_tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if frac > int_tol && best.is_none_or(|(_, f)| frac > f) {
            best = Some((j, frac));
        }
    }
    best.map(|(j, _)| j)
}

fn fractionality(v: f64) -> f64 {
    (v - v.floor()).min(v.ceil() - v)
}

/// Fractional diving: fix the binary closest to integrality, re-solve, and
/// repeat until the relaxation is integral. A fixing that makes the LP
/// infeasible is flipped once; a second failure abandons the dive.
fn dive<F>(binaries: &[usize], start: &LpSolution, int_tol: f64, mut solve: F) -> Result<Option<(Vec<f64>, f64)>, SolverError>
where
    F: FnMut(&[(usize, f64)]) -> Result<LpSolution, SolverError>,
{
    let mut fixings: Vec<(usize, f64)> = Vec::new();
    let (mut x, mut obj) = (start.primal.clone(), start.objective);
    for _ in 0..binaries.len() {
        let pick = binaries
            .iter()
            .copied()
            .filter(|j| fractionality(x[*j]) > int_tol)
            .min_by(|a, b| fractionality(x[*a]).total_cmp(&fractionality(x[*b])).then(a.cmp(b)));
        let Some(j) = pick else {
            return Ok(Some((x, obj)));
        };
        let near = x[j].round();
        let mut moved = false;
        for v in [near, 1.0 - near] {
            fixings.push((j, v));
            let sol = solve(&fixings)?;
            if sol.status == LpStatus::Optimal {
                x = sol.primal;
                obj = sol.objective;
                moved = true;
                break;
            }
            fixings.pop();
        }
        if !moved {
            return Ok(None);
        }
    }
    Ok(None)
}

pub fn solve_milp(mip: &MixedIntegerProgram, opts: &SolverOptions) -> Result<MilpSolution, SolverError> {
    mip.validate()?;
    let started = Instant::now();

    // Trivial bound fixing: binaries live on the integer points of their box.
    let mut base = mip.base.clone();
    for &j in &mip.binaries {
        base.lower[j] = (base.lower[j] - opts.int_tol).ceil().clamp(0.0, 1.0);
        base.upper[j] = (base.upper[j] + opts.int_tol).floor().clamp(0.0, 1.0);
        if base.lower[j] > base.upper[j] {
            return Ok(MilpSolution {
                status: MilpStatus::Infeasible,
                primal: Vec::new(),
                objective: f64::INFINITY,
                gap: f64::INFINITY,
                nodes_explored: 0,
                nodes: Vec::new(),
            });
        }
    }

    let mut records = Vec::new();
    let mut nodes_explored = 0usize;
    let mut next_id = 0usize;
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut heap = BinaryHeap::new();

    let mut lp = base.clone();
    let solve_node = |fixings: &[(usize, f64)], lp: &mut LinearProgram| {
        for &(j, v) in fixings {
            lp.lower[j] = v;
            lp.upper[j] = v;
        }
        let out = solve_lp(lp, opts);
        for &(j, _) in fixings {
            lp.lower[j] = base.lower[j];
            lp.upper[j] = base.upper[j];
        }
        out
    };

    let root = solve_node(&[], &mut lp)?;
    nodes_explored += 1;
    match root.status {
        LpStatus::Infeasible => {
            if opts.record_nodes {
                records.push(NodeRecord {
                    id: 0,
                    depth: 0,
                    bound: f64::INFINITY,
                    incumbent: f64::INFINITY,
                    pruned: true,
                    integral: false,
                });
            }
            return Ok(MilpSolution {
                status: MilpStatus::Infeasible,
                primal: Vec::new(),
                objective: f64::INFINITY,
                gap: f64::INFINITY,
                nodes_explored,
                nodes: records,
            });
        }
        LpStatus::Unbounded => return Err(SolverError::UnboundedRelaxation),
        LpStatus::Optimal => {}
    }
    if opts.dive && branching_column(&mip.binaries, &root.primal, opts.int_tol).is_some() {
        incumbent = dive(&mip.binaries, &root, opts.int_tol, |f| solve_node(f, &mut lp))?;
    }
    heap.push(Node { id: next_id, depth: 0, bound: root.objective, fixings: Vec::new(), primal: root.primal });
    next_id += 1;

    let prune_tol = |inc: f64| opts.gap_tol * inc.abs().max(1.0);
    let mut budget_hit = false;

    while let Some(node) = heap.pop() {
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |(_, o)| *o);
        if node.bound >= inc_obj - prune_tol(inc_obj) {
            // Best-bound order: every remaining node is at least as bad.
            if opts.record_nodes {
                records.push(NodeRecord {
                    id: node.id,
                    depth: node.depth,
                    bound: node.bound,
                    incumbent: inc_obj,
                    pruned: true,
                    integral: false,
                });
                for rest in heap.drain() {
                    records.push(NodeRecord {
                        id: rest.id,
                        depth: rest.depth,
                        bound: rest.bound,
                        incumbent: inc_obj,
                        pruned: true,
                        integral: false,
                    });
                }
            }
            heap.clear();
            break;
        }

        let Some(col) = branching_column(&mip.binaries, &node.primal, opts.int_tol) else {
            // Integral relaxation: new incumbent.
            if opts.record_nodes {
                records.push(NodeRecord {
                    id: node.id,
                    depth: node.depth,
                    bound: node.bound,
                    incumbent: inc_obj,
                    pruned: false,
                    integral: true,
                });
            }
            if node.bound < inc_obj {
                incumbent = Some((node.primal, node.bound));
            }
            continue;
        };

        if opts.record_nodes {
            records.push(NodeRecord {
                id: node.id,
                depth: node.depth,
                bound: node.bound,
                incumbent: inc_obj,
                pruned: false,
                integral: false,
            });
        }

        if nodes_explored >= opts.node_limit || opts.time_limit.is_some_and(|limit| started.elapsed() >= limit) {
            heap.push(node);
            budget_hit = true;
            break;
        }

        for value in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((col, value));
            let sol = solve_node(&fixings, &mut lp)?;
            nodes_explored += 1;
            let id = next_id;
            next_id += 1;
            if sol.status != LpStatus::Optimal {
                if opts.record_nodes {
                    records.push(NodeRecord {
                        id,
                        depth: node.depth + 1,
                        bound: f64::INFINITY,
                        incumbent: inc_obj,
                        pruned: true,
                        integral: false,
                    });
                }
                continue;
            }
            let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |(_, o)| *o);
            if sol.objective >= inc_obj - prune_tol(inc_obj) {
                if opts.record_nodes {
                    records.push(NodeRecord {
                        id,
                        depth: node.depth + 1,
                        bound: sol.objective,
                        incumbent: inc_obj,
                        pruned: true,
                        integral: false,
                    });
                }
                continue;
            }
            heap.push(Node { id, depth: node.depth + 1, bound: sol.objective, fixings, primal: sol.primal });
        }
    }

    let Some((mut primal, _)) = incumbent else {
        if budget_hit {
            return Err(SolverError::NodeLimit { nodes: nodes_explored });
        }
        return Ok(MilpSolution {
            status: MilpStatus::Infeasible,
            primal: Vec::new(),
            objective: f64::INFINITY,
            gap: f64::INFINITY,
            nodes_explored,
            nodes: records,
        });
    };
    for &j in &mip.binaries {
        primal[j] = primal[j].round();
    }
    let objective: f64 = mip.base.objective.iter().zip(&primal).map(|(c, x)| c * x).sum();
    let best_bound = heap.iter().map(|n| n.bound).fold(objective, f64::min);
    let gap = relative_gap(objective, best_bound);
    let status = if budget_hit && gap > opts.gap_tol { MilpStatus::GapLimit } else { MilpStatus::Optimal };

    Ok(MilpSolution { status, primal, objective, gap, nodes_explored, nodes: records })
}
