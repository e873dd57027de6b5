//! Diversification measure and portfolio dimensionality.
//!
//! For a leverage-invariant non-Gaussianity measure `nu`, the diversification
//! of a portfolio relative to a reference asset `Z` is `D = nu(Z) / nu(p)`.
//! For excess kurtosis and squared skewness the average of `k` iid copies of
//! `Z` has `nu = nu(Z) / k`, so the dimensionality equals `D`.

use serde::{Deserialize, Serialize};

use crate::comoments::CoMomentSet;
use crate::error::{Error, Result};
use crate::retsim::{nig_moments, NigParams};

/// Below this value of `nu(p)` the portfolio counts as Gaussian.
pub const NEAR_GAUSSIAN_NU: f64 = 1e-6;

/// Largest `k` of the tabulated reference curve used for interpolation.
pub const DEFAULT_K_MAX: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuMeasure {
    ExcessKurtosis,
    SquaredSkewness,
}

/// Reference asset `Z` given by its value of `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAsset {
    pub nu_value: f64,
    pub description: String,
}

impl ReferenceAsset {
    pub fn new(nu_value: f64, description: impl Into<String>) -> Result<Self> {
        if !(nu_value.is_finite() && nu_value > 0.0) {
            return Err(Error::InvalidInput(format!("reference nu must be positive, got {nu_value}")));
        }
        Ok(Self { nu_value, description: description.into() })
    }

    /// Reference value computed from NIG parameters.
    pub fn from_nig(p: &NigParams, measure: NuMeasure) -> Result<Self> {
        p.validate()?;
        let m = nig_moments(p);
        let nu = match measure {
            NuMeasure::ExcessKurtosis => m.kurtosis - 3.0,
            NuMeasure::SquaredSkewness => m.skewness * m.skewness,
        };
        Self::new(
            nu,
            format!("NIG(alpha={}, beta={}, delta={}, mu={})", p.alpha, p.beta, p.delta, p.mu),
        )
    }
}

/// Quality of a `nu` evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuQuality {
    Ok,
    /// `nu(p)` at or below [`NEAR_GAUSSIAN_NU`]; `D` is reported as infinite.
    NearGaussian,
    /// Negative excess kurtosis: `nu` is not a positive measure here.
    Platykurtic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuValue {
    pub value: f64,
    pub quality: NuQuality,
}

/// `nu` of the portfolio `w`. The weights are used as given, so scaled
/// weights (leverage) are allowed.
pub fn nu(w: &[f64], c: &CoMomentSet, m: NuMeasure) -> Result<NuValue> {
    let pm = c.portfolio_moments(w)?;
    if !(pm.variance > 0.0) {
        return Err(Error::InvalidInput("portfolio variance is zero".into()));
    }
    let value = match m {
        NuMeasure::ExcessKurtosis => pm.mu4 / (pm.variance * pm.variance) - 3.0,
        NuMeasure::SquaredSkewness => pm.mu3 * pm.mu3 / pm.variance.powi(3),
    };
    let quality = if m == NuMeasure::ExcessKurtosis && value < 0.0 {
        NuQuality::Platykurtic
    } else if value <= NEAR_GAUSSIAN_NU {
        NuQuality::NearGaussian
    } else {
        NuQuality::Ok
    };
    Ok(NuValue { value, quality })
}

/// `nu` of the average of `k` iid copies of the reference asset.
pub fn reference_curve(k: f64, reference: &ReferenceAsset) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(Error::InvalidInput(format!("k must be at least 1, got {k}")));
    }
    Ok(reference.nu_value / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diversification {
    pub nu_portfolio: f64,
    /// `nu(Z) / nu(p)`; infinite when the portfolio is near Gaussian.
    pub measure: f64,
    pub dimensionality: f64,
    pub quality: NuQuality,
}

/// `D` and `d` of the portfolio `w`.
pub fn diversification(
    w: &[f64],
    c: &CoMomentSet,
    reference: &ReferenceAsset,
    m: NuMeasure,
) -> Result<Diversification> {
    let v = nu(w, c, m)?;
    let measure = match v.quality {
        NuQuality::Ok => reference.nu_value / v.value,
        NuQuality::NearGaussian => f64::INFINITY,
        NuQuality::Platykurtic => f64::NAN,
    };
    Ok(Diversification { nu_portfolio: v.value, measure, dimensionality: measure, quality: v.quality })
}

/// Portfolio dimensionality `d = D` for the supported measures.
pub fn dimensionality(w: &[f64], c: &CoMomentSet, reference: &ReferenceAsset, m: NuMeasure) -> Result<f64> {
    Ok(diversification(w, c, reference, m)?.dimensionality)
}

/// Inverse of a strictly decreasing curve `f(k)` tabulated at `k = 1..=k_max`,
/// by monotone cubic (PCHIP) interpolation in `k`. Returns the `k` with
/// `f(k) = value`; values outside the tabulated range extrapolate with the
/// `1/k` shape of the end segments.
pub fn invert_curve<F: Fn(usize) -> f64>(f: F, value: f64, k_max: usize) -> Result<f64> {
    if k_max < 2 {
        return Err(Error::InvalidInput("k_max must be at least 2".into()));
    }
    let ks: Vec<f64> = (1..=k_max).map(|k| k as f64).collect();
    let fs: Vec<f64> = (1..=k_max).map(&f).collect();
    if fs.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::InvalidInput("reference curve is not strictly decreasing".into()));
    }
    if value >= fs[0] {
        return Ok(fs[0] / value);
    }
    if value <= fs[k_max - 1] {
        return Ok(k_max as f64 * fs[k_max - 1] / value);
    }
    // Interpolate k as a function of f (increasing in -f).
    let x: Vec<f64> = fs.iter().map(|v| -v).collect();
    let d = pchip_slopes(&x, &ks);
    let i = x.partition_point(|&v| v <= -value).clamp(1, k_max - 1) - 1;
    let h = x[i + 1] - x[i];
    let s = (-value - x[i]) / h;
    let (s2, s3) = (s * s, s * s * s);
    Ok((2.0 * s3 - 3.0 * s2 + 1.0) * ks[i]
        + (s3 - 2.0 * s2 + s) * h * d[i]
        + (-2.0 * s3 + 3.0 * s2) * ks[i + 1]
        + (s3 - s2) * h * d[i + 1])
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if del[i - 1] * del[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }
    d[0] = end_slope(h[0], h.get(1).copied().unwrap_or(h[0]), del[0], del.get(1).copied().unwrap_or(del[0]));
    d[n - 1] = end_slope(
        h[n - 2],
        if n > 2 { h[n - 3] } else { h[n - 2] },
        del[n - 2],
        if n > 2 { del[n - 3] } else { del[n - 2] },
    );
    d
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Third-asset weight of the risk parity portfolio in the three-asset example.
pub fn toy_rp_weight(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok((2.0 * (1.0 + rho).sqrt() - (1.0 + rho)) / (3.0 - rho))
}

/// Third-asset weight of the maximum diversification ratio portfolio in the
/// three-asset example.
pub fn toy_dr_weight(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok((1.0 + rho) / (3.0 + rho))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!("rho must lie in (-1, 1), got {rho}")));
    }
    Ok(())
}
