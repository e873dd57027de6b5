//! Normal inverse Gaussian margins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::bessel_k1_scaled;

/// NIG parameters: tail heaviness `alpha`, asymmetry `beta`, scale `delta`, location `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub mu: f64,
}

/// First four moments of a margin (kurtosis is non-excess).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginTarget {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl MarginTarget {
    /// Zero-mean, unit-variance symmetric margin with the given kurtosis.
    pub fn symmetric(kurtosis: f64) -> Self {
        Self { mean: 0.0, variance: 1.0, skewness: 0.0, kurtosis }
    }

    /// Upper limit `3 (kurtosis - 3) / 5` on the squared skewness.
    pub fn skew_bound(&self) -> f64 {
        3.0 * (self.kurtosis - 3.0) / 5.0
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.mean, self.variance, self.skewness, self.kurtosis].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("margin target"));
        }
        if self.variance <= 0.0 {
            return Err(Error::InvalidInput(format!("variance must be positive, got {}", self.variance)));
        }
        if self.kurtosis <= 3.0 {
            return Err(Error::InvalidNig(format!(
                "NIG kurtosis strictly exceeds 3, got {}",
                self.kurtosis
            )));
        }
        let skew_sq = self.skewness * self.skewness;
        let bound = self.skew_bound();
        if skew_sq >= bound {
            return Err(Error::SkewKurtBound { skew_sq, bound });
        }
        Ok(())
    }
}

impl NigParams {
    pub fn new(alpha: f64, beta: f64, delta: f64, mu: f64) -> Result<Self> {
        let p = Self { alpha, beta, delta, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.alpha, self.beta, self.delta, self.mu].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("NIG parameters"));
        }
        if self.delta <= 0.0 {
            return Err(Error::InvalidNig(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.beta.abs() < self.alpha) {
            return Err(Error::InvalidNig(format!(
                "need |beta| < alpha, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// `sqrt(alpha^2 - beta^2)`.
    pub fn gamma(&self) -> f64 {
        (self.alpha * self.alpha - self.beta * self.beta).sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        self.beta == 0.0
    }
}

/// Density of the NIG law.
pub fn nig_pdf(x: f64, p: &NigParams) -> Result<f64> {
    p.validate()?;
    Ok(pdf_unchecked(x, p))
}

#[inline]
pub(crate) fn pdf_unchecked(x: f64, p: &NigParams) -> f64 {
    let dx = x - p.mu;
    let s = (p.delta * p.delta + dx * dx).sqrt();
    let z = p.alpha * s;
    let log_scale = p.delta * p.gamma() + p.beta * dx - z;
    p.alpha * p.delta / (std::f64::consts::PI * s) * log_scale.exp() * bessel_k1_scaled(z)
}

/// Closed-form mean, variance, skewness and kurtosis.
pub fn nig_moments(p: &NigParams) -> MarginTarget {
    let g = p.gamma();
    let ratio = p.beta / p.alpha;
    MarginTarget {
        mean: p.mu + p.delta * p.beta / g,
        variance: p.delta * p.alpha * p.alpha / g.powi(3),
        skewness: 3.0 * ratio / (p.delta.sqrt() * g.sqrt()),
        kurtosis: 3.0 + 3.0 * (1.0 + 4.0 * ratio * ratio) / (p.delta * g),
    }
}

/// Inverts [`nig_moments`].
///
/// With `r = beta / alpha` and `z = delta sqrt(alpha^2 - beta^2)` the shape
/// moments are `skew = 3 r / sqrt(z)` and `exkurt = 3 (1 + 4 r^2) / z`, so
/// `skew^2 / exkurt = 3 r^2 / (1 + 4 r^2)` fixes `r` and then `z`; the
/// variance fixes `alpha` and the mean fixes `mu`.
pub fn nig_params_from_moments(t: &MarginTarget) -> Result<NigParams> {
    t.validate()?;
    let excess = t.kurtosis - 3.0;
    let q = t.skewness * t.skewness / excess;
    let r2 = q / (3.0 - 4.0 * q);
    let r = r2.sqrt().copysign(t.skewness);
    let zeta = 3.0 * (1.0 + 4.0 * r2) / excess;
    let one_minus = 1.0 - r2;
    let alpha = (zeta / t.variance).sqrt() / one_minus;
    let beta = r * alpha;
    let g = alpha * one_minus.sqrt();
    let delta = zeta / g;
    let mu = t.mean - delta * beta / g;
    NigParams::new(alpha, beta, delta, mu)
}
