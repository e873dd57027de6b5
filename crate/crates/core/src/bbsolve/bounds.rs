//! Objective evaluation, the denominator floor, and the three bounding problems.

use super::cells::{cut_points, subdivision_chains, subdivision_points, SimplexCell, MAX_BARYCENTRIC_VERTICES};
use crate::comoments::{dot, CoMomentSet};
use crate::error::{Error, Result};
use crate::simplex::project_into;
use crate::subsolver::{solve_lp, solve_milp_with, LpProblem, LpStatus, MilpOptions, MilpProblem};

const ALPHA_TOL: f64 = 1e-10;
const ALPHA_MAX_ITER: usize = 100_000;

/// `h(w) = f(w) / g(w)` with `f = (w' M2 w)^2` and `g = mu4(w)`, evaluated on
/// co-moments rescaled to unit average variance (h is scale free).
#[derive(Debug, Clone)]
pub struct Objective {
    cm: CoMomentSet,
    scale: f64,
}

impl Objective {
    pub fn new(c: &CoMomentSet) -> Self {
        let n = c.n_assets();
        let avg_var = (0..n).map(|i| c.cov(i, i)).sum::<f64>() / n as f64;
        let scale = 1.0 / avg_var.sqrt();
        Self { cm: c.scaled(scale), scale }
    }

    /// Converts a fourth-moment level of the raw returns to the internal scale.
    pub fn to_internal_mu4(&self, raw: f64) -> f64 {
        raw * self.scale.powi(4)
    }

    pub fn to_raw_mu4(&self, internal: f64) -> f64 {
        internal / self.scale.powi(4)
    }

    pub fn n_assets(&self) -> usize {
        self.cm.n_assets()
    }

    pub fn comoments(&self) -> &CoMomentSet {
        &self.cm
    }

    pub fn f(&self, w: &[f64]) -> f64 {
        let mut buf = vec![0.0; w.len()];
        self.cm.m2_times(w, &mut buf);
        let v = dot(w, &buf);
        v * v
    }

    /// `g(w)` and its gradient.
    pub fn g_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        self.cm.mu4_grad_into(w, grad)
    }

    pub fn g(&self, w: &[f64]) -> f64 {
        let mut grad = vec![0.0; w.len()];
        self.g_grad(w, &mut grad)
    }

    pub fn h(&self, w: &[f64]) -> f64 {
        self.f(w) / self.g(w)
    }

    /// Affine minorant of `g` at `r`, returned as a closure-free pair
    /// `(g(r), grad g(r))`; its value at `v` is `g(r) + grad . (v - r)`.
    fn tangent(&self, r: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; r.len()];
        let g = self.g_grad(r, &mut grad);
        (g, grad)
    }
}

fn tangent_at(t: &(f64, Vec<f64>), r: &[f64], v: &[f64]) -> f64 {
    t.0 + t.1.iter().zip(v.iter().zip(r)).map(|(gi, (vi, ri))| gi * (vi - ri)).sum::<f64>()
}

/// Minimum of the convex portfolio fourth moment over the simplex, found by
/// projected gradient descent with backtracking, times `safety`.
pub fn alpha_floor(c: &CoMomentSet, safety: f64) -> Result<f64> {
    let obj = Objective::new(c);
    Ok(obj.to_raw_mu4(alpha_internal(&obj, safety)?))
}

pub(crate) fn alpha_internal(obj: &Objective, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha safety must lie in (0, 1], got {safety}")));
    }
    Ok(safety * min_fourth_moment(obj)?.0)
}

/// Minimum value and minimizer of `g` (internal scale) over the simplex.
pub(crate) fn min_fourth_moment(obj: &Objective) -> Result<(f64, Vec<f64>)> {
    let n = obj.n_assets();
    let mut w = vec![1.0 / n as f64; n];
    if n == 1 {
        return Ok((obj.g(&w), w));
    }
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut step_pt = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n);
    let mut gw = obj.g_grad(&w, &mut grad);
    let mut t = 1.0 / (12.0 * gw.max(1e-300));
    for _ in 0..ALPHA_MAX_ITER {
        loop {
            for i in 0..n {
                step_pt[i] = w[i] - t * grad[i];
            }
            project_into(&step_pt, &mut trial, &mut scratch);
            let gt = obj.g(&trial);
            let mut lin = gw;
            let mut sq = 0.0;
            for i in 0..n {
                let d = trial[i] - w[i];
                lin += grad[i] * d;
                sq += d * d;
            }
            if gt <= lin + sq / (2.0 * t) + 1e-15 * gw {
                break;
            }
            t *= 0.5;
            if t < 1e-300 {
                return Err(Error::NoConvergence(0));
            }
        }
        let moved: f64 = trial.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        w.copy_from_slice(&trial);
        gw = obj.g_grad(&w, &mut grad);
        if moved / t < ALPHA_TOL {
            return Ok((gw, w));
        }
        t *= 1.5;
    }
    Err(Error::NoConvergence(ALPHA_MAX_ITER))
}

/// Which relaxation bounds a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Affine envelope of f, one tangent of g at the barycenter.
    Lp1,
    /// As `Lp1` plus tangents of g at the cut points.
    Lp2,
    /// Envelope of f over the barycentric subdivision (binary selection).
    Milp,
}

/// Upper bound of `h` over a cell and the feasible point recovered from the
/// relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBound {
    pub upper_bound: f64,
    pub candidate: Vec<f64>,
    pub lp_iterations: usize,
}

/// Shared data for bounding one cell.
pub(crate) struct BoundSetup<'a> {
    pub obj: &'a Objective,
    pub alpha: f64,
    pub n_c: usize,
    pub milp_cuts: bool,
    pub binary_budget: usize,
}

/// Constraint rows on `[u, b_0, .., b_{m-1}, ...]` shared by all modes:
/// `sum b - u = 0`, `u <= 1/alpha`, and `u * t(y/u) <= 1` for every tangent `t`.
fn base_problem(
    points: &[Vec<f64>],
    fvals: &[f64],
    tangents: &[(Vec<f64>, (f64, Vec<f64>))],
    alpha: f64,
    extra_vars: usize,
) -> LpProblem {
    let m = points.len();
    let nv = 1 + m + extra_vars;
    let mut obj = vec![0.0; nv];
    obj[1..=m].copy_from_slice(fvals);
    let mut p = LpProblem::new(obj);
    let mut link = vec![0.0; nv];
    link[0] = -1.0;
    link[1..=m].iter_mut().for_each(|x| *x = 1.0);
    p.add_eq(link, 0.0);
    let mut cap = vec![0.0; nv];
    cap[0] = 1.0;
    p.add_le(cap, 1.0 / alpha);
    // With y = sum b_i v_i and u = sum b_i, u t(y/u) = sum b_i t(v_i).
    for (r, t) in tangents {
        let mut row = vec![0.0; nv];
        for (i, v) in points.iter().enumerate() {
            row[1 + i] = tangent_at(t, r, v);
        }
        p.add_le(row, 1.0);
    }
    p
}

fn tangents(obj: &Objective, cell: &SimplexCell, cuts: Option<usize>) -> Vec<(Vec<f64>, (f64, Vec<f64>))> {
    let c = cell.barycenter();
    let mut out = vec![(c.clone(), obj.tangent(&c))];
    if let Some(n_c) = cuts {
        for r in cut_points(cell, n_c) {
            let t = obj.tangent(&r);
            out.push((r, t));
        }
    }
    out
}

fn recover(points: &[Vec<f64>], x: &[f64], cell: &SimplexCell) -> Vec<f64> {
    let u = x[0];
    let n = cell.vertices[0].len();
    if !(u > 0.0) {
        return cell.barycenter();
    }
    let mut w = vec![0.0; n];
    for (i, v) in points.iter().enumerate() {
        let b = x[1 + i].max(0.0);
        for (wk, vk) in w.iter_mut().zip(v) {
            *wk += b * vk;
        }
    }
    let mut scratch = Vec::new();
    let raw: Vec<f64> = w.iter().map(|x| x / u).collect();
    // Snap rounding residue back onto the simplex.
    project_into(&raw, &mut w, &mut scratch);
    w
}

fn finish(sol: crate::subsolver::LpSolution, points: &[Vec<f64>], cell: &SimplexCell) -> Result<CellBound> {
    match sol.status {
        LpStatus::Optimal => Ok(CellBound {
            upper_bound: sol.value,
            candidate: recover(points, &sol.x, cell),
            lp_iterations: sol.iterations,
        }),
        s => Err(Error::Internal(format!("bounding problem reported {s:?}"))),
    }
}

pub(crate) fn bound_cell(setup: &BoundSetup, cell: &SimplexCell, mode: BoundMode) -> Result<CellBound> {
    match mode {
        BoundMode::Lp1 => bound_lp(setup.obj, cell, setup.alpha, None),
        BoundMode::Lp2 => bound_lp(setup.obj, cell, setup.alpha, Some(setup.n_c)),
        BoundMode::Milp => {
            let cuts = if setup.milp_cuts { Some(setup.n_c) } else { None };
            bound_milp_internal(setup.obj, cell, setup.alpha, cuts, setup.binary_budget)
        }
    }
}

/// Linear relaxation with the affine envelope of f and the barycentric
/// tangent of g. `alpha` is a lower bound on the fourth moment over the cell.
pub fn bound_lp1(cell: &SimplexCell, c: &CoMomentSet, alpha: f64) -> Result<CellBound> {
    let obj = Objective::new(c);
    bound_lp(&obj, cell, obj.to_internal_mu4(alpha), None)
}

/// [`bound_lp1`] plus tangents of g at the `(n+1) n_c` cut points.
pub fn bound_lp2(cell: &SimplexCell, c: &CoMomentSet, alpha: f64, n_c: usize) -> Result<CellBound> {
    check_cuts(n_c)?;
    let obj = Objective::new(c);
    bound_lp(&obj, cell, obj.to_internal_mu4(alpha), Some(n_c))
}

/// Mixed-integer bound over the full barycentric subdivision of the cell.
pub fn bound_milp(cell: &SimplexCell, c: &CoMomentSet, alpha: f64) -> Result<CellBound> {
    let obj = Objective::new(c);
    bound_milp_internal(&obj, cell, obj.to_internal_mu4(alpha), None, crate::subsolver::DEFAULT_BINARY_BUDGET)
}

/// [`bound_milp`] with optional cut tangents (as in [`bound_lp2`]) and an
/// explicit binary budget.
pub fn bound_milp_with(
    cell: &SimplexCell,
    c: &CoMomentSet,
    alpha: f64,
    cuts: Option<usize>,
    binary_budget: usize,
) -> Result<CellBound> {
    if let Some(n_c) = cuts {
        check_cuts(n_c)?;
    }
    let obj = Objective::new(c);
    bound_milp_internal(&obj, cell, obj.to_internal_mu4(alpha), cuts, binary_budget)
}

fn check_cuts(n_c: usize) -> Result<()> {
    if n_c == 0 {
        return Err(Error::InvalidInput("n_c must be at least 1".into()));
    }
    Ok(())
}

fn bound_lp(obj: &Objective, cell: &SimplexCell, alpha: f64, cuts: Option<usize>) -> Result<CellBound> {
    check_alpha(alpha)?;
    let points = &cell.vertices;
    let fvals: Vec<f64> = points.iter().map(|v| obj.f(v)).collect();
    let p = base_problem(points, &fvals, &tangents(obj, cell, cuts), alpha, 0);
    finish(solve_lp(&p)?, points, cell)
}

fn bound_milp_internal(
    obj: &Objective,
    cell: &SimplexCell,
    alpha: f64,
    cuts: Option<usize>,
    binary_budget: usize,
) -> Result<CellBound> {
    check_alpha(alpha)?;
    let m = cell.n_vertices();
    if m > MAX_BARYCENTRIC_VERTICES {
        return Err(Error::InvalidInput(format!("MILP bound supports at most {MAX_BARYCENTRIC_VERTICES} vertices")));
    }
    let points = subdivision_points(cell);
    let chains = subdivision_chains(m);
    let np = points.len();
    let nj = chains.len();
    if nj > binary_budget {
        return Err(Error::BinaryBudgetExceeded { count: nj, budget: binary_budget });
    }
    let fvals: Vec<f64> = points.iter().map(|v| obj.f(v)).collect();
    let mut p = base_problem(&points, &fvals, &tangents(obj, cell, cuts), alpha, 2 * nj);
    let nv = p.n_vars();
    let z = |j: usize| 1 + np + j;
    let q = |j: usize| 1 + np + nj + j;
    let inv_a = 1.0 / alpha;

    let mut sum_q = vec![0.0; nv];
    (0..nj).for_each(|j| sum_q[q(j)] = 1.0);
    p.add_eq(sum_q, 1.0);
    // b_i <= sum over subdivision simplices containing point i of z_j
    for i in 0..np {
        let mask = i + 1;
        let mut row = vec![0.0; nv];
        row[1 + i] = 1.0;
        for (j, chain) in chains.iter().enumerate() {
            if chain.contains(&mask) {
                row[z(j)] = -1.0;
            }
        }
        p.add_le(row, 0.0);
    }
    for j in 0..nj {
        let mut r = vec![0.0; nv];
        r[z(j)] = 1.0;
        r[q(j)] = -inv_a;
        p.add_le(r, 0.0);
        let mut r = vec![0.0; nv];
        r[z(j)] = 1.0;
        r[0] = -1.0;
        p.add_le(r, 0.0);
        let mut r = vec![0.0; nv];
        r[0] = 1.0;
        r[z(j)] = -1.0;
        r[q(j)] = inv_a;
        p.add_le(r, inv_a);
    }
    let milp = MilpProblem { lp: p, binaries: (0..nj).map(q).collect() };
    let sol = solve_milp_with(&milp, &MilpOptions { binary_budget })?;
    finish(sol.solution, &points, cell)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}
