//! Correlation map of the Gaussian copula under non-Gaussian margins.

use std::f64::consts::PI;

use super::margin::{Margin, MarginDist};
use crate::comoments::check_positive_definite;
use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, gauss_legendre_unit_64};
use crate::rng::std_normal_quantile;

/// Largest |rho_in| probed when bracketing.
pub const RHO_IN_EDGE: f64 = 0.999_999;
/// Bisection tolerance on rho_in.
pub const BISECTION_TOL: f64 = 1e-6;

const THETA_NODES: usize = 32;

/// A margin evaluated at the fixed Gauss-Legendre nodes of (0, 1):
/// normal scores `a_i`, and `w_i / f(F^{-1}(u_i))`.
#[derive(Debug, Clone)]
pub struct MarginNodes {
    margin: Margin,
    score: Vec<f64>,
    weight: Vec<f64>,
    sd: f64,
}

impl MarginNodes {
    pub fn new(dist: &MarginDist) -> Self {
        let (u, w) = gauss_legendre_unit_64();
        let mut score = Vec::with_capacity(u.len());
        let mut weight = Vec::with_capacity(u.len());
        for (&ui, &wi) in u.iter().zip(w) {
            score.push(std_normal_quantile(ui));
            let x = dist.quantile_unchecked(ui);
            weight.push(wi / dist.pdf(x));
        }
        let margin = dist.margin();
        Self { margin, score, weight, sd: margin.variance().sqrt() }
    }

    pub fn margin(&self) -> &Margin {
        &self.margin
    }
}

/// Linear correlation of `(F_X^{-1}(Phi(A)), F_Y^{-1}(Phi(B)))` when `(A, B)`
/// is standard bivariate normal with correlation `rho_in`.
///
/// Hoeffding's identity gives the covariance as the integral of
/// `C(u, v) - u v` against `dF_X^{-1}(u) dF_Y^{-1}(v)`; the copula excess is
/// itself `int_0^{rho} phi_2(a, b; r) dr`, evaluated with `r = sin(theta)`.
pub fn rho_out(rho_in: f64, mx: &MarginDist, my: &MarginDist) -> Result<f64> {
    rho_out_nodes(rho_in, &MarginNodes::new(mx), &MarginNodes::new(my))
}

pub fn rho_out_nodes(rho_in: f64, x: &MarginNodes, y: &MarginNodes) -> Result<f64> {
    if !(rho_in.abs() < 1.0) {
        return Err(Error::InvalidInput(format!("rho_in must lie in (-1, 1), got {rho_in}")));
    }
    if rho_in == 0.0 {
        return Ok(0.0);
    }
    let (tn, tw) = theta_rule();
    let top = rho_in.asin();
    let thetas: Vec<(f64, f64, f64)> = tn
        .iter()
        .zip(tw)
        .map(|(&t, &w)| {
            let th = 0.5 * top * (t + 1.0);
            let c = th.cos();
            (th.sin(), 0.5 / (c * c), w * 0.5 * top)
        })
        .collect();
    let mut cov = 0.0;
    for (&a, &wa) in x.score.iter().zip(&x.weight) {
        let mut row = 0.0;
        for (&b, &wb) in y.score.iter().zip(&y.weight) {
            let q = a * a + b * b;
            let ab2 = 2.0 * a * b;
            let excess: f64 = thetas
                .iter()
                .map(|&(s, k, w)| w * (-(q - ab2 * s) * k).exp())
                .sum();
            row += wb * excess;
        }
        cov += wa * row;
    }
    cov /= 2.0 * PI;
    let r = cov / (x.sd * y.sd);
    if !r.is_finite() {
        return Err(Error::Integration("correlation integral is not finite".into()));
    }
    Ok(r)
}

fn theta_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(THETA_NODES))
}

/// Solves `rho_out(r) = target` for `r` by bisection.
pub fn invert_rho_out(target: f64, x: &MarginNodes, y: &MarginNodes) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let lo_val = rho_out_nodes(-RHO_IN_EDGE, x, y)?;
    let hi_val = rho_out_nodes(RHO_IN_EDGE, x, y)?;
    if !(target > lo_val && target < hi_val) {
        return Err(Error::CorrelationUnattainable { target, lo: lo_val, hi: hi_val });
    }
    let (mut lo, mut hi) = (-RHO_IN_EDGE, RHO_IN_EDGE);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if rho_out_nodes(mid, x, y)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Validates a correlation matrix (row-major `n x n`).
pub fn check_correlation_matrix(c: &[f64], n: usize) -> Result<()> {
    crate::error::check_len(n * n, c.len())?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation matrix"));
    }
    for i in 0..n {
        if (c[i * n + i] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("correlation diagonal entry {i} is {}", c[i * n + i])));
        }
        for j in 0..i {
            if (c[i * n + j] - c[j * n + i]).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("correlation matrix not symmetric at ({i}, {j})")));
            }
            if c[i * n + j].abs() >= 1.0 {
                return Err(Error::InvalidInput(format!("correlation entry ({i}, {j}) is {}", c[i * n + j])));
            }
        }
    }
    check_positive_definite(c, n)
}

/// Input correlation of the Gaussian copula that reproduces `target` as the
/// linear correlation of the returns. Entry-wise inversion; the result is
/// checked for positive definiteness but not repaired.
pub fn adjust_correlation(target: &[f64], margins: &[MarginDist]) -> Result<Vec<f64>> {
    let n = margins.len();
    check_correlation_matrix(target, n)?;
    let nodes: Vec<MarginNodes> = margins.iter().map(MarginNodes::new).collect();
    let mut out = vec![0.0; n * n];
    // Inversions repeat for identical margin pairs and targets.
    let mut cache: Vec<((Margin, Margin, u64), f64)> = Vec::new();
    for i in 0..n {
        out[i * n + i] = 1.0;
        for j in 0..i {
            let t = target[i * n + j];
            let key = (*nodes[i].margin(), *nodes[j].margin(), t.to_bits());
            let r = match cache.iter().find(|(k, _)| *k == key) {
                Some(&(_, r)) => r,
                None => {
                    let r = invert_rho_out(t, &nodes[i], &nodes[j])?;
                    cache.push((key, r));
                    r
                }
            };
            out[i * n + j] = r;
            out[j * n + i] = r;
        }
    }
    check_positive_definite(&out, n)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retsim::nig::{nig_params_from_moments, MarginTarget};

    fn nig6() -> MarginDist {
        Margin::Nig(nig_params_from_moments(&MarginTarget::symmetric(6.0)).unwrap())
            .distribution()
            .unwrap()
    }

    fn gauss() -> MarginDist {
        Margin::Gaussian { mean: 0.3, sd: 1.7 }.distribution().unwrap()
    }

    #[test]
    fn zero_maps_to_zero() {
        let m = nig6();
        assert_eq!(rho_out(0.0, &m, &m).unwrap(), 0.0);
        let tiny = rho_out(1e-12, &m, &m).unwrap();
        assert!(tiny.abs() < 1e-10);
    }

    #[test]
    fn gaussian_margins_are_identity() {
        let g = gauss();
        for &r in &[-0.9, -0.5, -0.2, 0.1, 0.5, 0.9, 0.95, 0.99] {
            let out = rho_out(r, &g, &g).unwrap();
            assert!((out - r).abs() < 1e-3, "rho_in {r} -> {out}");
        }
    }

    #[test]
    fn odd_symmetry_and_monotone() {
        let m = nig6();
        let nodes = MarginNodes::new(&m);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..21 {
            let r = -0.99 + 1.98 * k as f64 / 20.0;
            let a = rho_out_nodes(r, &nodes, &nodes).unwrap();
            let b = rho_out_nodes(-r, &nodes, &nodes).unwrap();
            assert!((a + b).abs() < 1e-8);
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn identity_target() {
        let m = vec![nig6(), nig6(), gauss()];
        let id = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(adjust_correlation(&id, &m).unwrap(), id);
    }

    #[test]
    fn round_trip_two_by_two() {
        let m = vec![nig6(), nig6()];
        let target = vec![1.0, -0.2, -0.2, 1.0];
        let adj = adjust_correlation(&target, &m).unwrap();
        let back = rho_out(adj[1], &m[0], &m[1]).unwrap();
        assert!((back + 0.2).abs() < 1e-4);
    }

    #[test]
    fn gaussian_adjustment_is_identity() {
        let m = vec![gauss(), gauss(), gauss()];
        let target = vec![1.0, 0.3, -0.2, 0.3, 1.0, 0.5, -0.2, 0.5, 1.0];
        let adj = adjust_correlation(&target, &m).unwrap();
        for (a, t) in adj.iter().zip(&target) {
            assert!((a - t).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_invalid_targets() {
        let m = vec![gauss(), gauss()];
        assert!(adjust_correlation(&[1.0, 0.5, 0.4, 1.0], &m).is_err());
        assert!(adjust_correlation(&[1.0, 1.0, 1.0, 1.0], &m).is_err());
        assert!(rho_out(1.0, &m[0], &m[1]).is_err());
    }
}
