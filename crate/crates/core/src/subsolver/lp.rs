//! Dense revised primal simplex.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost tolerance.
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const REFACTOR_EVERY: usize = 64;

/// `maximize c.x` subject to `A_eq x = b_eq`, `A_le x <= b_le`, `lo <= x <= hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub le_rows: Vec<Vec<f64>>,
    pub le_rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

impl LpProblem {
    /// Problem with the given objective, no constraints and `x >= 0`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            le_rows: Vec::new(),
            le_rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
        self
    }

    /// `row . x >= rhs`, stored as `-row . x <= -rhs`.
    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_le(row.into_iter().map(|v| -v).collect(), -rhs)
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: Option<f64>) -> &mut Self {
        self.lower[j] = lo;
        self.upper[j] = hi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let dims_ok = self.eq_rows.len() == self.eq_rhs.len()
            && self.le_rows.len() == self.le_rhs.len()
            && self.lower.len() == n
            && self.upper.len() == n
            && self.eq_rows.iter().chain(&self.le_rows).all(|r| r.len() == n);
        if !dims_ok {
            return Err(Error::InvalidInput("LP dimensions are inconsistent".into()));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.eq_rows.iter().chain(&self.le_rows).flatten().all(|v| v.is_finite())
            && self.eq_rhs.iter().chain(&self.le_rhs).chain(&self.lower).all(|v| v.is_finite())
            && self.upper.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("LP data"));
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for (row, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            v = v.max((dot(row, x) - b).abs());
        }
        for (row, b) in self.le_rows.iter().zip(&self.le_rhs) {
            v = v.max(dot(row, x) - b);
        }
        for (j, &xj) in x.iter().enumerate() {
            v = v.max(self.lower[j] - xj);
            if let Some(h) = self.upper[j] {
                v = v.max(xj - h);
            }
        }
        v
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, n: usize, iterations: usize) -> Self {
        let value = match status {
            LpStatus::Unbounded => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        Self { status, value, x: vec![f64::NAN; n], iterations }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard form `A z = b, z >= 0`, `b >= 0`, columns stored densely.
struct Tableau {
    m: usize,
    n_cols: usize,
    /// Column-major constraint matrix.
    cols: Vec<Vec<f64>>,
    b: Vec<f64>,
    artificial_start: usize,
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: usize,
}

impl Tableau {
    fn build(p: &LpProblem) -> Self {
        let n = p.n_vars();
        // Rows in order: equalities, inequalities, finite upper bounds.
        let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
        for (r, &b) in p.eq_rows.iter().zip(&p.eq_rhs) {
            rows.push((r.clone(), b - dot(r, &p.lower), false));
        }
        for (r, &b) in p.le_rows.iter().zip(&p.le_rhs) {
            rows.push((r.clone(), b - dot(r, &p.lower), true));
        }
        for j in 0..n {
            if let Some(h) = p.upper[j] {
                let mut r = vec![0.0; n];
                r[j] = 1.0;
                rows.push((r, h - p.lower[j], true));
            }
        }
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.2).count();
        let mut cols: Vec<Vec<f64>> = vec![vec![0.0; m]; n + n_slack];
        let mut b = vec![0.0; m];
        let mut basis = vec![usize::MAX; m];
        let mut needs_artificial = Vec::new();
        let mut slack = n;
        for (i, (r, rhs, has_slack)) in rows.into_iter().enumerate() {
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                cols[j][i] = sign * r[j];
            }
            b[i] = sign * rhs;
            if has_slack {
                cols[slack][i] = sign;
                if sign > 0.0 {
                    basis[i] = slack;
                }
                slack += 1;
            }
            if basis[i] == usize::MAX {
                needs_artificial.push(i);
            }
        }
        let artificial_start = cols.len();
        for &i in &needs_artificial {
            let mut c = vec![0.0; m];
            c[i] = 1.0;
            basis[i] = cols.len();
            cols.push(c);
        }
        let n_cols = cols.len();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let xb = b.clone();
        Self {
            m,
            n_cols,
            cols,
            b,
            artificial_start,
            basis,
            binv,
            xb,
            pivots_since_refactor: 0,
            iterations: 0,
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        if m == 0 {
            return Ok(());
        }
        let bmat = DMatrix::from_fn(m, m, |i, k| self.cols[self.basis[k]][i]);
        let inv = bmat.try_inverse().ok_or_else(|| {
            Error::NumericalBreakdown(format!("singular basis after {} iterations", self.iterations))
        })?;
        for i in 0..m {
            for k in 0..m {
                self.binv[i * m + k] = inv[(i, k)];
            }
        }
        for i in 0..m {
            let v: f64 = (0..m).map(|k| self.binv[i * m + k] * self.b[k]).sum();
            self.xb[i] = if v.abs() < 1e-13 { 0.0 } else { v };
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// `B^{-1} a`.
    fn ftran(&self, a: &[f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            out[i] = dot(row, a);
        }
    }

    fn pivot(&mut self, r: usize, entering: usize, u: &[f64]) -> Result<()> {
        let m = self.m;
        let piv = u[r];
        let theta = self.xb[r].max(0.0) / piv;
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * u[i];
                if self.xb[i].abs() < 1e-13 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[r] = theta;
        let pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m].iter().map(|v| v / piv).collect();
        for i in 0..m {
            if i == r || u[i] == 0.0 {
                continue;
            }
            let f = u[i];
            for k in 0..m {
                self.binv[i * m + k] -= f * pivot_row[k];
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&pivot_row);
        self.basis[r] = entering;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Maximizes `cost . z` over columns `< allowed`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize, max_iter: usize) -> Result<bool> {
        let m = self.m;
        let mut u = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut in_basis = vec![false; self.n_cols];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        let mut degenerate = 0usize;
        let bland_after = 50 * m.max(1);
        loop {
            if self.iterations >= max_iter {
                return Err(Error::NoConvergence(self.iterations));
            }
            let bland = degenerate >= bland_after;
            // y = c_B B^{-1}
            for k in 0..m {
                y[k] = (0..m).map(|i| cost[self.basis[i]] * self.binv[i * m + k]).sum();
            }
            let mut entering = None;
            let mut best = OPT_TOL;
            for j in 0..allowed {
                if in_basis[j] {
                    continue;
                }
                let d = cost[j] - dot(&y, &self.cols[j]);
                if d > best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Ok(true);
            };
            self.ftran(&self.cols[q].clone(), &mut u);
            let leave = self.ratio_test(&u, allowed, bland);
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            if ratio <= FEAS_TOL {
                degenerate += 1;
            }
            in_basis[self.basis[r]] = false;
            in_basis[q] = true;
            self.pivot(r, q, &u)?;
            self.iterations += 1;
        }
    }

    /// Leaving row and step length for the entering direction `u`, or `None`
    /// if the direction is unbounded. Two passes (Harris): the first finds
    /// the largest step that keeps every basic variable above `-FEAS_TOL`,
    /// the second picks the largest pivot among rows blocking within it.
    /// Basic artificials left over from phase 1 must stay at zero, so they
    /// block in either direction once they are no longer allowed to price.
    fn ratio_test(&self, u: &[f64], allowed: usize, bland: bool) -> Option<(usize, f64)> {
        let m = self.m;
        let umax = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tol = PIVOT_TOL.max(1e-9 * umax);
        let pinned = |i: usize| self.basis[i] >= allowed;
        let mut bound = f64::INFINITY;
        for i in 0..m {
            if pinned(i) && u[i].abs() > tol {
                bound = 0.0;
            } else if u[i] > tol {
                bound = bound.min((self.xb[i].max(0.0) + FEAS_TOL) / u[i]);
            }
        }
        if bound == f64::INFINITY {
            return None;
        }
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let (t, piv) = if pinned(i) && u[i].abs() > tol {
                (0.0, u[i].abs())
            } else if u[i] > tol {
                (self.xb[i].max(0.0) / u[i], u[i])
            } else {
                continue;
            };
            if t > bound {
                continue;
            }
            let better = match leave {
                None => true,
                Some((l, _)) => {
                    if bland {
                        self.basis[i] < self.basis[l]
                    } else {
                        piv > u[l].abs()
                    }
                }
            };
            if better {
                leave = Some((i, t));
            }
        }
        leave
    }

    /// Pivots basic artificials at zero level out of the basis where possible.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.m;
        let mut u = vec![0.0; m];
        for r in 0..m {
            if self.basis[r] < self.artificial_start {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let candidate = (0..self.artificial_start)
                .filter(|j| !self.basis.contains(j))
                .find(|&j| dot(&row, &self.cols[j]).abs() > 1e-9);
            if let Some(j) = candidate {
                self.ftran(&self.cols[j].clone(), &mut u);
                self.pivot(r, j, &u)?;
            }
            // Otherwise the row is redundant and the artificial stays at zero.
        }
        Ok(())
    }

    fn primal(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.n_cols];
        for (i, &j) in self.basis.iter().enumerate() {
            z[j] = self.xb[i];
        }
        z
    }
}

/// Solves `p` by the two-phase revised simplex method.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let n = p.n_vars();
    let mut t = Tableau::build(p);
    let max_iter = 10_000 + 200 * (t.m + t.n_cols);

    if t.artificial_start < t.n_cols {
        let mut cost1 = vec![0.0; t.n_cols];
        for c in cost1.iter_mut().skip(t.artificial_start) {
            *c = -1.0;
        }
        t.optimize(&cost1, t.n_cols, max_iter)?;
        t.refactor()?;
        let infeas: f64 = t.basis.iter().zip(&t.xb).filter(|(j, _)| **j >= t.artificial_start).map(|(_, v)| *v).sum();
        let scale = 1.0 + t.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeas > FEAS_TOL * scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, n, t.iterations));
        }
        t.drive_out_artificials()?;
    }

    let mut cost2 = vec![0.0; t.n_cols];
    cost2[..n].copy_from_slice(&p.objective);
    let bounded = t.optimize(&cost2, t.artificial_start, max_iter)?;
    if !bounded {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, n, t.iterations));
    }
    t.refactor()?;
    let z = t.primal();
    let x: Vec<f64> = (0..n).map(|j| z[j].max(0.0) + p.lower[j]).collect();
    let viol = p.max_violation(&x);
    let scale = 1.0 + t.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if viol > 1e3 * FEAS_TOL * scale {
        return Err(Error::NumericalBreakdown(format!("final point violates constraints by {viol:e}")));
    }
    Ok(LpSolution { status: LpStatus::Optimal, value: p.objective_at(&x), x, iterations: t.iterations })
}
