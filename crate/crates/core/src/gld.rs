//! Multistart projected Gradient Langevin Dynamics on the weight simplex.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comoments::{CoMomentSet, Weights};
use crate::error::{Error, Result};
use crate::rng::{substream, Domain};
pub use crate::simplex::{project_simplex, sample_uniform_simplex};
use crate::simplex::project_into;

/// Bins of the final-iterate weight histograms on [0, 1].
pub const HISTOGRAM_BINS: usize = 200;

/// A smooth function on the simplex to be minimized.
pub trait Objective: Sync {
    fn n_assets(&self) -> usize;

    /// Writes the gradient into `grad` and returns the value. `scratch` has length N.
    fn value_grad(&self, w: &[f64], grad: &mut [f64], scratch: &mut [f64]) -> f64;

    fn value(&self, w: &[f64]) -> f64 {
        let n = w.len();
        self.value_grad(w, &mut vec![0.0; n], &mut vec![0.0; n])
    }
}

/// Portfolio kurtosis.
impl Objective for CoMomentSet {
    fn n_assets(&self) -> usize {
        CoMomentSet::n_assets(self)
    }

    fn value_grad(&self, w: &[f64], grad: &mut [f64], scratch: &mut [f64]) -> f64 {
        self.kurtosis_grad_into(w, grad, scratch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GldConfig {
    pub lambda: f64,
    pub c: f64,
    pub n_sim: usize,
    pub n_iter: usize,
    pub seed: u64,
    pub polish: bool,
    /// Paths whose iterates are stored (the first `trace_paths` indices).
    pub trace_paths: usize,
    /// Store every `trace_every`-th iterate of a traced path.
    pub trace_every: usize,
    pub parallel: bool,
}

impl Default for GldConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            c: 0.06,
            n_sim: 1000,
            n_iter: 10_000,
            seed: 0,
            polish: true,
            trace_paths: 4,
            trace_every: 10,
            parallel: true,
        }
    }
}

impl GldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidInput(format!("c must be positive, got {}", self.c)));
        }
        if self.n_sim == 0 {
            return Err(Error::InvalidInput("n_sim must be at least 1".into()));
        }
        if self.trace_every == 0 {
            return Err(Error::InvalidInput("trace_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Inverse temperature `2 lambda n^2 / c^2`.
pub fn temperature(lambda: f64, n_assets: usize, c: f64) -> f64 {
    2.0 * lambda * (n_assets * n_assets) as f64 / (c * c)
}

/// Iterates of one traced path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub path: usize,
    pub iterations: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub weights: Weights,
    pub value: f64,
    pub iterations: usize,
    /// Norm of `w - P(w - grad)` at the returned point.
    pub stationarity: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GldResult {
    pub best_weights: Weights,
    pub best_kurtosis: f64,
    /// Best point over all paths before polishing.
    pub gld_weights: Weights,
    pub gld_kurtosis: f64,
    pub polish: Option<LocalResult>,
    pub path_best: Vec<f64>,
    pub path_best_weights: Vec<Vec<f64>>,
    /// Per asset, counts of final iterates in [`HISTOGRAM_BINS`] bins on [0, 1].
    pub final_histograms: Vec<Vec<u64>>,
    pub final_mean: Vec<f64>,
    pub traces: Vec<PathTrace>,
    pub evaluations: u64,
    pub beta: f64,
}

struct Scratch {
    grad: Vec<f64>,
    tmp: Vec<f64>,
    step: Vec<f64>,
    sorted: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { grad: vec![0.0; n], tmp: vec![0.0; n], step: vec![0.0; n], sorted: Vec::with_capacity(n) }
    }
}

/// `out = P(w - lambda grad + sigma eps)`.
fn step_into<R: RngCore + ?Sized>(w: &[f64], grad: &[f64], lambda: f64, sigma: f64, rng: &mut R, s: &mut Scratch, out: &mut [f64]) {
    for i in 0..w.len() {
        let eps: f64 = if sigma > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
        s.step[i] = w[i] - lambda * grad[i] + sigma * eps;
    }
    project_into(&s.step, out, &mut s.sorted);
}

fn noise_scale(lambda: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        0.0
    } else {
        (2.0 * lambda / beta).sqrt()
    }
}

/// One projected Langevin step at inverse temperature `beta` (use
/// `f64::INFINITY` for plain projected gradient descent).
pub fn gld_step<O: Objective + ?Sized, R: RngCore + ?Sized>(
    w: &Weights,
    obj: &O,
    lambda: f64,
    beta: f64,
    rng: &mut R,
) -> Result<Weights> {
    let n = obj.n_assets();
    crate::error::check_len(n, w.len())?;
    if !(lambda > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidInput("lambda and beta must be positive".into()));
    }
    let mut s = Scratch::new(n);
    let v = obj.value_grad(w.as_slice(), &mut s.grad, &mut s.tmp);
    if !v.is_finite() || s.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("objective gradient"));
    }
    let grad = s.grad.clone();
    let mut out = vec![0.0; n];
    step_into(w.as_slice(), &grad, lambda, noise_scale(lambda, beta), rng, &mut s, &mut out);
    Ok(Weights::from_feasible(out))
}

struct PathOutcome {
    best: f64,
    best_w: Vec<f64>,
    last: Vec<f64>,
    trace: Option<PathTrace>,
    evaluations: u64,
}

fn run_path<O: Objective + ?Sized>(obj: &O, cfg: &GldConfig, beta: f64, path: usize) -> Result<PathOutcome> {
    let n = obj.n_assets();
    let mut rng = substream(cfg.seed, Domain::Gld, path as u64);
    let mut w = sample_uniform_simplex(n, &mut rng)?.into_inner();
    let mut next = vec![0.0; n];
    let mut s = Scratch::new(n);
    let sigma = noise_scale(cfg.lambda, beta);
    let mut v = obj.value_grad(&w, &mut s.grad, &mut s.tmp);
    let mut best = v;
    let mut best_w = w.clone();
    let mut trace = (path < cfg.trace_paths)
        .then(|| PathTrace { path, iterations: vec![0], weights: vec![w.clone()], values: vec![v] });
    let mut grad = vec![0.0; n];
    for k in 1..=cfg.n_iter {
        if !v.is_finite() {
            return Err(Error::NonFinite("objective along a GLD path"));
        }
        grad.copy_from_slice(&s.grad);
        step_into(&w, &grad, cfg.lambda, sigma, &mut rng, &mut s, &mut next);
        std::mem::swap(&mut w, &mut next);
        v = obj.value_grad(&w, &mut s.grad, &mut s.tmp);
        if v < best {
            best = v;
            best_w.copy_from_slice(&w);
        }
        if let Some(t) = trace.as_mut() {
            if k % cfg.trace_every == 0 || k == cfg.n_iter {
                t.iterations.push(k);
                t.weights.push(w.clone());
                t.values.push(v);
            }
        }
    }
    Ok(PathOutcome { best, best_w, last: w, trace, evaluations: cfg.n_iter as u64 + 1 })
}

/// Runs `n_sim` projected GLD paths from uniform starts, keeps the overall
/// best iterate, and optionally polishes it with [`local_descent`].
pub fn multistart<O: Objective + ?Sized>(obj: &O, cfg: &GldConfig) -> Result<GldResult> {
    cfg.validate()?;
    let n = obj.n_assets();
    if n == 0 {
        return Err(Error::InvalidInput("zero assets".into()));
    }
    let beta = temperature(cfg.lambda, n, cfg.c);
    let outcomes: Vec<PathOutcome> = if cfg.parallel {
        (0..cfg.n_sim).into_par_iter().map(|p| run_path(obj, cfg, beta, p)).collect::<Result<_>>()?
    } else {
        (0..cfg.n_sim).map(|p| run_path(obj, cfg, beta, p)).collect::<Result<_>>()?
    };

    // Lowest path index wins ties.
    let mut pick = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.best < outcomes[pick].best {
            pick = i;
        }
    }
    let gld_w = outcomes[pick].best_w.clone();
    let gld_v = outcomes[pick].best;

    let mut hist = vec![vec![0u64; HISTOGRAM_BINS]; n];
    let mut mean = vec![0.0; n];
    for o in &outcomes {
        for (i, &x) in o.last.iter().enumerate() {
            let b = ((x * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            hist[i][b] += 1;
            mean[i] += x / cfg.n_sim as f64;
        }
    }
    let mut evaluations: u64 = outcomes.iter().map(|o| o.evaluations).sum();

    let polish = if cfg.polish {
        let r = local_descent(obj, &gld_w, &LocalOptions::default())?;
        evaluations += r.evaluations;
        Some(r.result)
    } else {
        None
    };
    let (best_w, best_v) = match &polish {
        Some(p) if p.value < gld_v => (p.weights.as_slice().to_vec(), p.value),
        _ => (gld_w.clone(), gld_v),
    };
    let traces = outcomes.iter().filter_map(|o| o.trace.clone()).collect();
    Ok(GldResult {
        best_weights: Weights::from_feasible(best_w),
        best_kurtosis: best_v,
        gld_weights: Weights::from_feasible(gld_w),
        gld_kurtosis: gld_v,
        polish,
        path_best: outcomes.iter().map(|o| o.best).collect(),
        path_best_weights: outcomes.iter().map(|o| o.best_w.clone()).collect(),
        final_histograms: hist,
        final_mean: mean,
        traces,
        evaluations,
        beta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    pub armijo: f64,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { armijo: 1e-4, tol: 1e-8, max_iterations: 100_000 }
    }
}

pub(crate) struct LocalRun {
    pub result: LocalResult,
    pub evaluations: u64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `|w - P(w - grad)|`, zero exactly at KKT points.
fn projected_gap(w: &[f64], grad: &[f64], s: &mut Scratch, out: &mut [f64]) -> f64 {
    for i in 0..w.len() {
        s.step[i] = w[i] - grad[i];
    }
    project_into(&s.step, out, &mut s.sorted);
    dist(out, w)
}

/// Projected gradient descent with Armijo backtracking (step halving),
/// stopped when `|w - P(w - grad)| <= tol`. Trial steps start from the
/// Barzilai-Borwein length of the previous move.
pub fn local_minimize<O: Objective + ?Sized>(obj: &O, start: &[f64], opts: &LocalOptions) -> Result<LocalResult> {
    Ok(local_descent(obj, start, opts)?.result)
}

pub(crate) fn local_descent<O: Objective + ?Sized>(obj: &O, start: &[f64], opts: &LocalOptions) -> Result<LocalRun> {
    let n = obj.n_assets();
    crate::error::check_len(n, start.len())?;
    if start.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("start point"));
    }
    let mut s = Scratch::new(n);
    let mut w = vec![0.0; n];
    project_into(start, &mut w, &mut s.sorted);
    let mut grad = vec![0.0; n];
    let mut grad_prev = vec![0.0; n];
    let mut w_prev = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut v = obj.value_grad(&w, &mut grad, &mut tmp);
    let mut evaluations = 1u64;
    let mut t: f64 = 1.0;
    let mut iterations = 0;
    let mut gap = projected_gap(&w, &grad, &mut s, &mut trial);
    while gap > opts.tol && iterations < opts.max_iterations {
        if !v.is_finite() {
            return Err(Error::NonFinite("objective in local descent"));
        }
        let mut accepted = false;
        while t > 1e-20 {
            for i in 0..n {
                s.step[i] = w[i] - t * grad[i];
            }
            project_into(&s.step, &mut trial, &mut s.sorted);
            let decrease: f64 = grad.iter().zip(trial.iter().zip(&w)).map(|(g, (a, b))| g * (a - b)).sum();
            let vt = obj.value(&trial);
            evaluations += 1;
            // Slack of a few ulps: near the optimum the sufficient decrease
            // drops below the resolution of the objective.
            if vt <= v + opts.armijo * decrease + 8.0 * f64::EPSILON * v.abs() {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || trial == w {
            break;
        }
        w_prev.copy_from_slice(&w);
        grad_prev.copy_from_slice(&grad);
        w.copy_from_slice(&trial);
        v = obj.value_grad(&w, &mut grad, &mut tmp);
        evaluations += 1;
        iterations += 1;
        gap = projected_gap(&w, &grad, &mut s, &mut trial);
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let d = w[i] - w_prev[i];
            ss += d * d;
            sy += d * (grad[i] - grad_prev[i]);
        }
        t = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (2.0 * t).min(1e10) };
    }
    Ok(LocalRun {
        result: LocalResult {
            weights: Weights::from_feasible(w),
            value: v,
            iterations,
            stationarity: gap,
            converged: gap <= opts.tol,
        },
        evaluations,
    })
}

/// Options of the log-barrier interior method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierOptions {
    pub mu_start: f64,
    pub mu_end: f64,
    /// Barrier weight reduction factor per outer round.
    pub shrink: f64,
    pub armijo: f64,
    /// Inner stop: tangential gradient norm below `inner_tol * max(mu, mu_end)`.
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { mu_start: 1.0, mu_end: 1e-10, shrink: 0.1, armijo: 1e-4, inner_tol: 1e-2, max_inner: 20_000 }
    }
}

/// Interior-point local minimizer: minimizes `f(w) - mu sum log w_i` on
/// the relative interior of the simplex for a decreasing sequence of `mu`,
/// each round warm-started from the last. Returns the final iterate, whose
/// stationarity is measured as in [`local_minimize`].
pub fn interior_minimize<O: Objective + ?Sized>(obj: &O, start: &[f64], opts: &BarrierOptions) -> Result<LocalResult> {
    let n = obj.n_assets();
    crate::error::check_len(n, start.len())?;
    if !(opts.mu_start > 0.0 && opts.mu_end > 0.0 && opts.shrink > 0.0 && opts.shrink < 1.0) {
        return Err(Error::InvalidInput("barrier schedule must be positive and shrinking".into()));
    }
    let mut s = Scratch::new(n);
    let mut w = vec![0.0; n];
    project_into(start, &mut w, &mut s.sorted);
    // Pull the start strictly inside.
    for x in w.iter_mut() {
        *x = 0.99 * *x + 0.01 / n as f64;
    }
    let mut grad = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut d_prev = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let phi = |obj: &O, w: &[f64], mu: f64, grad: &mut [f64], tmp: &mut [f64]| -> f64 {
        let f = obj.value_grad(w, grad, tmp);
        let mut b = 0.0;
        for i in 0..w.len() {
            b += w[i].ln();
            grad[i] -= mu / w[i];
        }
        f - mu * b
    };
    let mut iterations = 0;
    let mut mu = opts.mu_start;
    loop {
        let mut v = phi(obj, &w, mu, &mut grad, &mut tmp);
        let mut t: f64 = 1.0;
        let mut w_prev = w.clone();
        let mut first = true;
        for _ in 0..opts.max_inner {
            // Descent direction in the tangent space of the simplex.
            let mean = grad.iter().sum::<f64>() / n as f64;
            for i in 0..n {
                d[i] = -(grad[i] - mean);
            }
            let dn = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !v.is_finite() {
                return Err(Error::NonFinite("barrier objective"));
            }
            if dn <= (opts.inner_tol * mu).max(1e-9) {
                break;
            }
            if !first {
                let (mut ss, mut sy) = (0.0, 0.0);
                for i in 0..n {
                    let dw = w[i] - w_prev[i];
                    ss += dw * dw;
                    sy += dw * (d_prev[i] - d[i]);
                }
                t = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e8) } else { 2.0 * t };
            }
            // Fraction to the boundary.
            let mut tmax = f64::INFINITY;
            for i in 0..n {
                if d[i] < 0.0 {
                    tmax = tmax.min(-0.95 * w[i] / d[i]);
                }
            }
            t = t.min(tmax);
            let slope = -dn * dn;
            let mut accepted = false;
            let mut vt = v;
            let mut gt = vec![0.0; n];
            while t > 1e-30 {
                for i in 0..n {
                    trial[i] = w[i] + t * d[i];
                }
                vt = phi(obj, &trial, mu, &mut gt, &mut tmp);
                if vt.is_finite() && vt <= v + opts.armijo * t * slope + 8.0 * f64::EPSILON * v.abs() {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || trial == w {
                break;
            }
            w_prev.copy_from_slice(&w);
            d_prev.copy_from_slice(&d);
            w.copy_from_slice(&trial);
            grad.copy_from_slice(&gt);
            v = vt;
            first = false;
            iterations += 1;
        }
        if mu <= opts.mu_end {
            break;
        }
        mu = (mu * opts.shrink).max(opts.mu_end);
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let value = obj.value_grad(&w, &mut grad, &mut tmp);
    let gap = projected_gap(&w, &grad, &mut s, &mut trial);
    Ok(LocalResult { weights: Weights::from_feasible(w), value, iterations, stationarity: gap, converged: gap <= 1e-6 })
}
