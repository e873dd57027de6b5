//! Margin specifications and tabulated CDF / quantile functions.

use serde::{Deserialize, Serialize};

use super::nig::{nig_moments, nig_params_from_moments, pdf_unchecked, MarginTarget, NigParams};
use crate::error::{Error, Result};
use crate::numerics::{integrate, integrate_lower_tail, integrate_upper_tail};
use crate::rng::{std_normal_cdf, std_normal_quantile};

/// Number of tabulation nodes.
pub const TABLE_NODES: usize = 2048;
/// Half-width of the tabulated range in standard deviations.
pub const TABLE_SPAN_SD: f64 = 40.0;

const MASS_TOL: f64 = 1e-8;

/// How a margin is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginSpec {
    /// NIG margin fitted to four moments.
    Moments(MarginTarget),
    /// NIG margin with explicit parameters.
    Nig(NigParams),
    Gaussian { mean: f64, sd: f64 },
}

impl MarginSpec {
    pub fn resolve(&self) -> Result<Margin> {
        match *self {
            MarginSpec::Moments(t) => Ok(Margin::Nig(nig_params_from_moments(&t)?)),
            MarginSpec::Nig(p) => {
                p.validate()?;
                Ok(Margin::Nig(p))
            }
            MarginSpec::Gaussian { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite()) {
                    return Err(Error::NonFinite("Gaussian margin"));
                }
                if sd <= 0.0 {
                    return Err(Error::InvalidInput(format!("Gaussian sd must be positive, got {sd}")));
                }
                Ok(Margin::Gaussian { mean, sd })
            }
        }
    }
}

/// A validated margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    Nig(NigParams),
    Gaussian { mean: f64, sd: f64 },
}

impl Margin {
    pub fn mean(&self) -> f64 {
        match self {
            Margin::Nig(p) => nig_moments(p).mean,
            Margin::Gaussian { mean, .. } => *mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Margin::Nig(p) => nig_moments(p).variance,
            Margin::Gaussian { sd, .. } => sd * sd,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Margin::Nig(p) => pdf_unchecked(x, p),
            Margin::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    /// Builds the CDF / quantile evaluator.
    pub fn distribution(&self) -> Result<MarginDist> {
        match *self {
            Margin::Gaussian { mean, sd } => Ok(MarginDist::Gaussian { mean, sd }),
            Margin::Nig(p) => Ok(MarginDist::Nig(Box::new(NigTable::build(p)?))),
        }
    }
}

/// CDF and quantile of a margin.
#[derive(Debug, Clone)]
pub enum MarginDist {
    Gaussian { mean: f64, sd: f64 },
    Nig(Box<NigTable>),
}

impl MarginDist {
    pub fn margin(&self) -> Margin {
        match self {
            MarginDist::Gaussian { mean, sd } => Margin::Gaussian { mean: *mean, sd: *sd },
            MarginDist::Nig(t) => Margin::Nig(t.params),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.margin().pdf(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            MarginDist::Gaussian { mean, sd } => std_normal_cdf((x - mean) / sd),
            MarginDist::Nig(t) => t.cdf(x),
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        match self {
            MarginDist::Gaussian { mean, sd } => mean + sd * std_normal_quantile(u),
            MarginDist::Nig(t) => t.quantile_unchecked(u),
        }
    }
}

fn check_unit(u: f64) -> Result<()> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidInput(format!("probability must lie in (0, 1), got {u}")));
    }
    Ok(())
}

/// Tabulated NIG distribution function.
///
/// Nodes sit on `mean + 0.5 sd sinh(t)` for equally spaced `t`, which puts
/// them densely in the body and sparsely in the tails. Between nodes the CDF
/// is a cubic Hermite interpolant on the exact density.
#[derive(Debug, Clone)]
pub struct NigTable {
    params: NigParams,
    x: Vec<f64>,
    cdf: Vec<f64>,
    slope: Vec<f64>,
}

impl NigTable {
    pub fn build(params: NigParams) -> Result<Self> {
        params.validate()?;
        let m = nig_moments(&params);
        let sd = m.variance.sqrt();
        let t_max = (2.0 * TABLE_SPAN_SD).asinh();
        let n = TABLE_NODES;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = -t_max + 2.0 * t_max * i as f64 / (n - 1) as f64;
                m.mean + 0.5 * sd * t.sinh()
            })
            .collect();
        let f = |v: f64| pdf_unchecked(v, &params);
        let lower = integrate_lower_tail(f, x[0], tail_tol(f(x[0]), sd))?;
        let upper = integrate_upper_tail(f, x[n - 1], tail_tol(f(x[n - 1]), sd))?;
        let mass: Vec<f64> = x
            .windows(2)
            .map(|w| integrate(f, w[0], w[1], 1e-16))
            .collect::<Result<_>>()?;
        // Accumulate from the nearer end so tail probabilities keep their
        // relative accuracy on both sides.
        let mut below = vec![lower; n];
        for i in 1..n {
            below[i] = below[i - 1] + mass[i - 1];
        }
        let mut above = vec![upper; n];
        for i in (0..n - 1).rev() {
            above[i] = above[i + 1] + mass[i];
        }
        let cdf: Vec<f64> = below
            .iter()
            .zip(&above)
            .map(|(&b, &a)| if b < 0.5 { b } else { 1.0 - a })
            .collect();
        let total = below[n - 1] + upper;
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Integration(format!(
                "NIG density integrates to {total} over the real line"
            )));
        }
        let mut slope: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        limit_slopes(&x, &cdf, &mut slope);
        Ok(Self { params, x, cdf, slope })
    }

    pub fn params(&self) -> &NigParams {
        &self.params
    }

    /// Lower and upper tabulated abscissae.
    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x.is_nan() {
            return f64::NAN;
        }
        if x < self.x[0] || x > self.x[n - 1] {
            let f = |v: f64| pdf_unchecked(v, &self.params);
            let tol = tail_tol(f(x), nig_moments(&self.params).variance.sqrt());
            return if x < self.x[0] {
                integrate_lower_tail(f, x, tol).unwrap_or(0.0)
            } else {
                1.0 - integrate_upper_tail(f, x, tol).unwrap_or(0.0)
            };
        }
        let i = self.x.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        self.hermite(i, x)
    }

    fn hermite(&self, i: usize, x: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let s = (x - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.cdf[i] + h10 * h * self.slope[i] + h01 * self.cdf[i + 1] + h11 * h * self.slope[i + 1]
    }

    fn hermite_slope(&self, i: usize, x: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let s = (x - self.x[i]) / h;
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        d00 * self.cdf[i] + d10 * self.slope[i] + d01 * self.cdf[i + 1] + d11 * self.slope[i + 1]
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        check_unit(u)?;
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let n = self.x.len();
        if u < self.cdf[0] || u > self.cdf[n - 1] {
            return self.quantile_outside(u);
        }
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, n - 1) - 1;
        let (mut a, mut b) = (self.x[i], self.x[i + 1]);
        let (mut fa, fb) = (self.cdf[i] - u, self.cdf[i + 1] - u);
        if fa == 0.0 {
            return a;
        }
        if fb == 0.0 {
            return b;
        }
        // Newton on the interpolant, safeguarded by the bracket.
        let mut x = a + (b - a) * (-fa / (fb - fa));
        for _ in 0..100 {
            let fx = self.hermite(i, x) - u;
            if fx == 0.0 {
                return x;
            }
            if (fx < 0.0) == (fa < 0.0) {
                a = x;
                fa = fx;
            } else {
                b = x;
            }
            let d = self.hermite_slope(i, x);
            let mut next = x - fx / d;
            if !(next > a && next < b) || !next.is_finite() {
                next = 0.5 * (a + b);
            }
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || b - a <= 1e-15 * (1.0 + x.abs()) {
                return next;
            }
            x = next;
        }
        x
    }

    /// Beyond the table: Newton on the log of the directly integrated tail
    /// mass, which is close to linear in x, safeguarded by a bracket.
    fn quantile_outside(&self, u: f64) -> f64 {
        let n = self.x.len();
        let lower = u < self.cdf[0];
        // Work with the tail probability q and the tail function G(x) (F or 1 - F).
        let q = if lower { u } else { 1.0 - u };
        let tail = |x: f64| if lower { self.cdf(x) } else { 1.0 - self.cdf(x) };
        let sd = nig_moments(&self.params).variance.sqrt();
        let dir = if lower { -1.0 } else { 1.0 };
        let mut inner = if lower { self.x[0] } else { self.x[n - 1] };
        let mut step = sd;
        let mut outer = inner + dir * step;
        while tail(outer) > q && step < 1e6 * sd {
            inner = outer;
            step *= 2.0;
            outer = inner + dir * step;
        }
        let lq = q.ln();
        let mut x = 0.5 * (inner + outer);
        for _ in 0..200 {
            let g = tail(x);
            if g > q {
                inner = x;
            } else {
                outer = x;
            }
            let resid = g.ln() - lq;
            // d/dx ln G = -dir * f / G
            let slope = -dir * self.params_pdf(x) / g;
            let mut next = x - resid / slope;
            let (a, b) = if inner < outer { (inner, outer) } else { (outer, inner) };
            if !(next > a && next < b) || !next.is_finite() {
                next = 0.5 * (inner + outer);
            }
            if (next - x).abs() <= 1e-14 * (1.0 + x.abs()) {
                return next;
            }
            x = next;
        }
        x
    }

    fn params_pdf(&self, x: f64) -> f64 {
        pdf_unchecked(x, &self.params)
    }
}

// Tail masses are of order pdf * sd, so this keeps the relative error small.
fn tail_tol(pdf: f64, sd: f64) -> f64 {
    (1e-12 * pdf * sd).max(1e-300)
}

/// Fritsch-Carlson limiter: shrinks node slopes where the cubic would
/// overshoot the secant and break monotonicity.
fn limit_slopes(x: &[f64], y: &[f64], d: &mut [f64]) {
    for i in 0..x.len() - 1 {
        let delta = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
        if delta <= 0.0 {
            d[i] = 0.0;
            d[i + 1] = 0.0;
            continue;
        }
        let a = d[i] / delta;
        let b = d[i + 1] / delta;
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            d[i] = tau * a * delta;
            d[i + 1] = tau * b * delta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard() -> NigTable {
        NigTable::build(NigParams::new(1.0, 0.0, 1.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn median_of_symmetric_law() {
        let t = standard();
        assert!(t.quantile(0.5).unwrap().abs() < 1e-8);
        assert!((t.cdf(0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn limits() {
        let t = standard();
        let (lo, hi) = t.range();
        assert!(t.cdf(lo) < 1e-9);
        assert!(t.cdf(hi) > 1.0 - 1e-9);
        assert!(t.cdf(-1e3) < 1e-9);
        assert!(t.cdf(1e3) > 1.0 - 1e-9);
    }

    #[test]
    fn round_trips() {
        let t = NigTable::build(NigParams::new(1.6, -0.4, 0.8, 0.1).unwrap()).unwrap();
        for &u in &[1e-12, 1e-6, 0.01, 0.25, 0.5, 0.9, 0.999_999] {
            let x = t.quantile(u).unwrap();
            assert!((t.cdf(x) - u).abs() < 1e-8, "u = {u}");
        }
        for i in -60..=60 {
            let x = 0.1 + i as f64 * 0.1;
            let back = t.quantile(t.cdf(x)).unwrap();
            assert!((back - x).abs() < 1e-8, "x = {x}, back = {back}");
        }
    }

    #[test]
    fn monotone_on_dense_grid() {
        let t = standard();
        let mut prev = t.cdf(-10.0);
        for i in 1..=20_000 {
            let x = -10.0 + i as f64 * 1e-3;
            let c = t.cdf(x);
            assert!(c > prev, "not increasing at {x}");
            prev = c;
        }
    }

    #[test]
    fn interpolant_matches_direct_integration() {
        let p = NigParams::new(1.0, 0.3, 1.2, 0.0).unwrap();
        let t = NigTable::build(p).unwrap();
        for &x in &[-3.3, -0.71, 0.0, 0.42, 2.9] {
            let direct = integrate_lower_tail(|v| pdf_unchecked(v, &p), x, 1e-15).unwrap();
            assert!((t.cdf(x) - direct).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn quantile_domain() {
        let t = standard();
        assert!(t.quantile(0.0).is_err());
        assert!(t.quantile(1.0).is_err());
        assert!(t.quantile(f64::NAN).is_err());
    }

    #[test]
    fn far_tail_quantile() {
        let t = standard();
        let u = t.cdf[0] * 0.5;
        let x = t.quantile(u).unwrap();
        assert!(x < t.range().0);
        assert!(((t.cdf(x) - u) / u).abs() < 1e-6);
    }

    #[test]
    fn gaussian_margin() {
        let d = Margin::Gaussian { mean: 1.0, sd: 2.0 }.distribution().unwrap();
        assert!((d.cdf(1.0) - 0.5).abs() < 1e-15);
        assert!((d.quantile(0.975).unwrap() - (1.0 + 2.0 * 1.959_963_984_540_054)).abs() < 1e-9);
    }
}
