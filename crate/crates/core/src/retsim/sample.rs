//! Meta-Gaussian sampling.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::copula::{adjust_correlation, check_correlation_matrix};
use super::margin::{MarginDist, MarginSpec};
use crate::comoments::{default_asset_names, ReturnSample};
use crate::error::{check_len, Error, Result};
use crate::rng::{standard_normal, std_normal_cdf, substream, Domain};

/// Rows per sampling block; each block owns one random substream.
pub const BLOCK_ROWS: usize = 4096;

const U_MIN: f64 = 1e-16;
const U_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Margins, target correlation and the adjusted copula correlation
/// (row-major `N x N`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaGaussianSpec {
    pub margins: Vec<MarginSpec>,
    pub target_corr: Vec<f64>,
    pub input_corr: Vec<f64>,
}

impl MetaGaussianSpec {
    /// Resolves the margins and computes the adjusted input correlation.
    pub fn new(margins: Vec<MarginSpec>, target_corr: Vec<f64>) -> Result<Self> {
        let dists = distributions(&margins)?;
        let input_corr = adjust_correlation(&target_corr, &dists)?;
        Ok(Self { margins, target_corr, input_corr })
    }

    /// `n` identical margins with a common pairwise target correlation.
    pub fn homogeneous(n: usize, margin: MarginSpec, rho: f64) -> Result<Self> {
        Self::new(vec![margin; n], constant_correlation(n, rho))
    }

    pub fn n_assets(&self) -> usize {
        self.margins.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.margins.len();
        if n == 0 {
            return Err(Error::InvalidInput("meta-Gaussian spec has no margins".into()));
        }
        check_correlation_matrix(&self.target_corr, n)?;
        check_correlation_matrix(&self.input_corr, n)
    }
}

/// Row-major correlation matrix with all off-diagonal entries `rho`.
pub fn constant_correlation(n: usize, rho: f64) -> Vec<f64> {
    let mut c = vec![rho; n * n];
    for i in 0..n {
        c[i * n + i] = 1.0;
    }
    c
}

/// Tabulates each distinct margin once.
pub fn distributions(margins: &[MarginSpec]) -> Result<Vec<MarginDist>> {
    let mut built: Vec<(MarginSpec, MarginDist)> = Vec::new();
    let mut out = Vec::with_capacity(margins.len());
    for m in margins {
        if let Some((_, d)) = built.iter().find(|(s, _)| s == m) {
            out.push(d.clone());
            continue;
        }
        let d = m.resolve()?.distribution()?;
        built.push((*m, d.clone()));
        out.push(d);
    }
    Ok(out)
}

/// Draws `t` rows: correlated normal scores `z = L eps`, uniforms `Phi(z)`,
/// and returns `F_i^{-1}(u_i)`. Output is identical for any thread count.
pub fn sample_meta_gaussian(spec: &MetaGaussianSpec, t: usize, seed: u64) -> Result<ReturnSample> {
    spec.validate()?;
    let n = spec.n_assets();
    if t < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 observations, got {t}")));
    }
    let dists = distributions(&spec.margins)?;
    let chol = DMatrix::from_row_slice(n, n, &spec.input_corr)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN, max_eigenvalue: f64::NAN })?;
    let l = chol.l();
    let lower: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
    let mut values = vec![0.0; t * n];
    values
        .par_chunks_mut(BLOCK_ROWS * n)
        .enumerate()
        .for_each(|(b, block)| {
            let mut rng = substream(seed, Domain::Simulation, b as u64);
            let mut eps = vec![0.0; n];
            for row in block.chunks_mut(n) {
                for e in eps.iter_mut() {
                    *e = standard_normal(&mut rng);
                }
                for i in 0..n {
                    let z: f64 = (0..=i).map(|j| lower[i * n + j] * eps[j]).sum();
                    let u = std_normal_cdf(z).clamp(U_MIN, U_MAX);
                    row[i] = dists[i].quantile_unchecked(u);
                }
            }
        });
    ReturnSample::new(values, n, default_asset_names(n))
}

/// Two-sided Kolmogorov-Smirnov statistic of `data` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> f64 {
    let mut x = data.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

/// Pearson correlation of two equally long series.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Ok(sab / (saa * sbb).sqrt())
}
