//! Branch-and-bound over binary variables.

use serde::{Deserialize, Serialize};

use super::lp::{solve_lp, LpProblem, LpSolution, LpStatus};
use crate::error::{Error, Result};

/// Default limit on the number of binary variables.
pub const DEFAULT_BINARY_BUDGET: usize = 24;
/// Integrality tolerance.
pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub lp: LpProblem,
    pub binaries: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilpOptions {
    pub binary_budget: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self { binary_budget: DEFAULT_BINARY_BUDGET }
    }
}

/// MILP solution with search statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub solution: LpSolution,
    pub nodes: usize,
}

struct Node {
    fixed: Vec<(usize, f64)>,
    depth: usize,
    bound: f64,
}

pub fn solve_milp(p: &MilpProblem) -> Result<LpSolution> {
    Ok(solve_milp_with(p, &MilpOptions::default())?.solution)
}

/// Depth-first branch and bound; the most fractional binary is branched on,
/// the `= 1` child first. Among open nodes of equal depth the one with the
/// larger parent bound is explored first.
pub fn solve_milp_with(p: &MilpProblem, opts: &MilpOptions) -> Result<MilpSolution> {
    p.lp.validate()?;
    let n = p.lp.n_vars();
    if let Some(&j) = p.binaries.iter().find(|&&j| j >= n) {
        return Err(Error::InvalidInput(format!("binary index {j} out of range for {n} variables")));
    }
    if p.binaries.len() > opts.binary_budget {
        return Err(Error::BinaryBudgetExceeded { count: p.binaries.len(), budget: opts.binary_budget });
    }
    let mut base = p.lp.clone();
    for &j in &p.binaries {
        base.lower[j] = base.lower[j].max(0.0);
        base.upper[j] = Some(base.upper[j].map_or(1.0, |h| h.min(1.0)));
    }
    if p.binaries.is_empty() {
        return Ok(MilpSolution { solution: solve_lp(&base)?, nodes: 1 });
    }

    let mut best: Option<LpSolution> = None;
    let mut open = vec![Node { fixed: Vec::new(), depth: 0, bound: f64::INFINITY }];
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    while !open.is_empty() {
        let pick = (0..open.len())
            .max_by(|&a, &b| {
                open[a]
                    .depth
                    .cmp(&open[b].depth)
                    .then(open[a].bound.total_cmp(&open[b].bound))
                    .then(a.cmp(&b))
            })
            .expect("non-empty");
        let node = open.swap_remove(pick);
        if let Some(inc) = &best {
            if node.bound <= inc.value + prune_tol(inc.value) {
                continue;
            }
        }
        let mut lp = base.clone();
        for &(j, v) in &node.fixed {
            lp.lower[j] = v;
            lp.upper[j] = Some(v);
        }
        let sol = solve_lp(&lp)?;
        nodes += 1;
        iterations += sol.iterations;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Ok(MilpSolution { solution: sol, nodes });
            }
            LpStatus::Optimal => {}
        }
        if let Some(inc) = &best {
            if sol.value <= inc.value + prune_tol(inc.value) {
                continue;
            }
        }
        let branch = p
            .binaries
            .iter()
            .copied()
            .filter(|&j| {
                let f = sol.x[j] - sol.x[j].floor();
                f > INT_TOL && f < 1.0 - INT_TOL
            })
            .min_by(|&a, &b| {
                let fa = (sol.x[a] - 0.5).abs();
                let fb = (sol.x[b] - 0.5).abs();
                fa.total_cmp(&fb).then(a.cmp(&b))
            });
        match branch {
            None => {
                let mut s = sol;
                for &j in &p.binaries {
                    s.x[j] = s.x[j].round();
                }
                best = Some(s);
            }
            Some(j) => {
                // Both children inherit the parent bound; on ties the later
                // index wins, so the `= 1` child is explored first.
                for v in [0.0, 1.0] {
                    let mut fixed = node.fixed.clone();
                    fixed.push((j, v));
                    open.push(Node { fixed, depth: node.depth + 1, bound: sol.value });
                }
            }
        }
    }
    let mut solution = match best {
        Some(s) => s,
        None => LpSolution {
            status: LpStatus::Infeasible,
            value: f64::NEG_INFINITY,
            x: vec![f64::NAN; n],
            iterations: 0,
        },
    };
    solution.iterations = iterations;
    Ok(MilpSolution { solution, nodes })
}

fn prune_tol(v: f64) -> f64 {
    1e-9 * (1.0 + v.abs())
}
