//! Deterministic branch and bound for the minimum-kurtosis portfolio.
//!
//! Maximizes `h(w) = (w' M2 w)^2 / mu4(w)` over the weight simplex by
//! longest-edge bisection, best-first selection and fathoming against a
//! relative tolerance.

mod bounds;
mod cells;

pub use bounds::{
    alpha_floor, bound_lp1, bound_lp2, bound_milp, bound_milp_with, BoundMode, CellBound, Objective,
};
pub use cells::{barycentric_subdivide, bisect, cut_points, SimplexCell, MAX_BARYCENTRIC_VERTICES, MIN_EDGE};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::comoments::{CoMomentSet, Weights};
use crate::error::{Error, Result};
use crate::subsolver::DEFAULT_BINARY_BUDGET;
use bounds::{alpha_internal, bound_cell, BoundSetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BbConfig {
    pub rho_tol: f64,
    pub bound_mode: BoundMode,
    /// Cut points per vertex for `Lp2` (and for `Milp` when `milp_cuts`).
    pub n_c: usize,
    pub max_iterations: usize,
    pub max_seconds: Option<f64>,
    pub alpha_safety: f64,
    /// Add the `Lp2` tangent cuts to the MILP so it never bounds worse than `Lp2`.
    pub milp_cuts: bool,
    pub binary_budget: usize,
    /// Bound the two children of a split concurrently.
    pub parallel: bool,
    /// Keep every fathomed cell and the final live cells in the result.
    pub record_cells: bool,
}

impl Default for BbConfig {
    fn default() -> Self {
        Self {
            rho_tol: 1e-3,
            bound_mode: BoundMode::Lp2,
            n_c: 1,
            max_iterations: 1_000_000,
            max_seconds: None,
            alpha_safety: 0.999,
            milp_cuts: true,
            binary_budget: DEFAULT_BINARY_BUDGET,
            parallel: true,
            record_cells: false,
        }
    }
}

impl BbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_tol >= 0.0 && self.rho_tol < 1.0) {
            return Err(Error::InvalidInput(format!("rho_tol must lie in [0, 1), got {}", self.rho_tol)));
        }
        if self.n_c == 0 {
            return Err(Error::InvalidInput("n_c must be at least 1".into()));
        }
        if !(self.alpha_safety > 0.0 && self.alpha_safety <= 1.0) {
            return Err(Error::InvalidInput(format!("alpha_safety must lie in (0, 1], got {}", self.alpha_safety)));
        }
        if let Some(s) = self.max_seconds {
            if !(s >= 0.0) {
                return Err(Error::InvalidInput("max_seconds must be non-negative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BbStatus {
    Optimal,
    IterationLimit,
    TimeLimit,
}

/// A cell removed by the fathoming rule, with the lower bound that removed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FathomedCell {
    pub cell: SimplexCell,
    pub lower_bound: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbResult {
    pub incumbent: Weights,
    pub incumbent_value: f64,
    pub kurtosis: f64,
    /// Global bounds after the fathoming sweep of each iteration, starting at 0.
    pub lb_history: Vec<f64>,
    pub ub_history: Vec<f64>,
    /// Fathomed cells over created cells, per iteration.
    pub deleted_fraction: Vec<f64>,
    pub iterations: usize,
    pub cells_created: usize,
    pub cells_fathomed: usize,
    pub status: BbStatus,
    /// Denominator floor in the units of the input co-moments.
    pub alpha: f64,
    pub fathomed: Vec<FathomedCell>,
    pub live: Vec<SimplexCell>,
}

impl BbResult {
    pub fn lower_bound(&self) -> f64 {
        *self.lb_history.last().unwrap_or(&self.incumbent_value)
    }

    pub fn upper_bound(&self) -> f64 {
        *self.ub_history.last().unwrap_or(&self.incumbent_value)
    }
}

struct Incumbent {
    w: Vec<f64>,
    value: f64,
}

impl Incumbent {
    fn offer(&mut self, obj: &Objective, w: &[f64]) {
        let v = obj.h(w);
        if v > self.value {
            self.value = v;
            self.w = w.to_vec();
        }
    }
}

/// Runs branch and bound on the co-moments `c`.
pub fn solve(c: &CoMomentSet, cfg: &BbConfig) -> Result<BbResult> {
    cfg.validate()?;
    let n = c.n_assets();
    let obj = Objective::new(c);
    let alpha = alpha_internal(&obj, cfg.alpha_safety)?;
    if n == 1 {
        let h = obj.h(&[1.0]);
        return Ok(BbResult {
            incumbent: Weights::equal(1),
            incumbent_value: h,
            kurtosis: 1.0 / h,
            lb_history: vec![h],
            ub_history: vec![h],
            deleted_fraction: vec![0.0],
            iterations: 0,
            cells_created: 1,
            cells_fathomed: 0,
            status: BbStatus::Optimal,
            alpha: obj.to_raw_mu4(alpha),
            fathomed: Vec::new(),
            live: Vec::new(),
        });
    }
    let setup = BoundSetup { obj: &obj, alpha, n_c: cfg.n_c, milp_cuts: cfg.milp_cuts, binary_budget: cfg.binary_budget };
    let start = Instant::now();
    let keep = 1.0 - cfg.rho_tol;

    let mut root = SimplexCell::standard(n);
    let rb = bound_cell(&setup, &root, cfg.bound_mode)?;
    root.upper_bound = rb.upper_bound;
    let mut inc = Incumbent { w: root.barycenter(), value: f64::NEG_INFINITY };
    inc.offer(&obj, &root.barycenter());
    inc.offer(&obj, &rb.candidate);

    let mut live = vec![root];
    let mut next_id = 1;
    let mut created = 1;
    let mut fathomed_count = 0;
    // Largest UB among cells that left the live set; keeps the global UB valid.
    let mut retired_ub = f64::NEG_INFINITY;
    let mut fathomed = Vec::new();
    let (mut lb_hist, mut ub_hist, mut del_hist) = (Vec::new(), Vec::new(), Vec::new());
    let mut iterations = 0;

    let status = loop {
        let lb = inc.value;
        live.retain(|cell| {
            if keep * cell.upper_bound <= lb {
                fathomed_count += 1;
                retired_ub = retired_ub.max(cell.upper_bound);
                if cfg.record_cells {
                    fathomed.push(FathomedCell { cell: cell.clone(), lower_bound: lb, iteration: iterations });
                }
                false
            } else {
                true
            }
        });
        let max_live = live.iter().map(|c| c.upper_bound).fold(f64::NEG_INFINITY, f64::max);
        let ub = max_live.max(retired_ub).max(lb);
        lb_hist.push(lb);
        ub_hist.push(ub_hist.last().map_or(ub, |&p: &f64| p.min(ub)));
        del_hist.push(fathomed_count as f64 / created as f64);

        if live.is_empty() {
            break BbStatus::Optimal;
        }
        if iterations >= cfg.max_iterations {
            break BbStatus::IterationLimit;
        }
        if cfg.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s) {
            break BbStatus::TimeLimit;
        }

        // Largest upper bound first, oldest cell on ties.
        let pick = live
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.upper_bound.total_cmp(&b.upper_bound).then(b.id.cmp(&a.id)))
            .map(|(i, _)| i)
            .expect("live set is non-empty");
        let parent = live.swap_remove(pick);
        iterations += 1;
        let (mut a, mut b) = match bisect(&parent, next_id) {
            Ok(pair) => pair,
            Err(Error::DegenerateCell(_)) => {
                // Too small to split further; its bound stays in the global UB.
                retired_ub = retired_ub.max(parent.upper_bound);
                continue;
            }
            Err(e) => return Err(e),
        };
        next_id += 2;
        created += 2;
        let (ba, bb) = if cfg.parallel {
            rayon::join(|| bound_cell(&setup, &a, cfg.bound_mode), || bound_cell(&setup, &b, cfg.bound_mode))
        } else {
            (bound_cell(&setup, &a, cfg.bound_mode), bound_cell(&setup, &b, cfg.bound_mode))
        };
        for (child, bound) in [(&mut a, ba?), (&mut b, bb?)] {
            child.upper_bound = bound.upper_bound.min(parent.upper_bound);
            inc.offer(&obj, &bound.candidate);
            inc.offer(&obj, &child.barycenter());
        }
        live.push(a);
        live.push(b);
    };

    let incumbent = Weights::new(inc.w.clone())?;
    Ok(BbResult {
        kurtosis: 1.0 / inc.value,
        incumbent,
        incumbent_value: inc.value,
        lb_history: lb_hist,
        ub_history: ub_hist,
        deleted_fraction: del_hist,
        iterations,
        cells_created: created,
        cells_fathomed: fathomed_count,
        status,
        alpha: obj.to_raw_mu4(alpha),
        fathomed,
        live: if cfg.record_cells { live } else { Vec::new() },
    })
}
