//! Sample co-moments and portfolio moments.
//!
//! The third and fourth co-moment tensors are fully symmetric, so only the
//! entries with sorted indices are estimated and stored. Entries are kept in
//! colex order of the sorted index tuple, which for `i <= j <= k <= l` gives
//!
//! ```text
//! rank(i, j, k, l) = i + C(j+1, 2) + C(k+2, 3) + C(l+3, 4)
//! ```
//!
//! and makes the nested loops `for l { for k <= l { for j <= k { for i <= j }}}`
//! walk the storage sequentially. The flattened block matrices `M3` (N x N^2)
//! and `M4` (N x N^3) are only materialized on request.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};

/// Rows per accumulation chunk. Chunk partial sums are reduced in chunk order.
pub const CHUNK_ROWS: usize = 4096;

/// Minimum ratio of smallest to largest covariance eigenvalue.
pub const PD_RATIO: f64 = 1e-10;

/// Tolerance on the sum of simplex weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A T x N matrix of plain returns, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSample {
    values: Vec<f64>,
    n_obs: usize,
    n_assets: usize,
    asset_names: Vec<String>,
}

impl ReturnSample {
    /// Builds a sample from row-major values.
    pub fn new(values: Vec<f64>, n_assets: usize, asset_names: Vec<String>) -> Result<Self> {
        if n_assets == 0 {
            return Err(Error::InvalidInput("a return sample needs at least one asset".into()));
        }
        if values.len() % n_assets != 0 {
            return Err(Error::InvalidInput(format!(
                "{} values do not fill rows of {} assets",
                values.len(),
                n_assets
            )));
        }
        let n_obs = values.len() / n_assets;
        if n_obs < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 observations, got {n_obs}")));
        }
        check_len(n_assets, asset_names.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("return sample"));
        }
        Ok(Self { values, n_obs, n_assets, asset_names })
    }

    /// Builds a sample with default names `asset_1 .. asset_N`.
    pub fn with_default_names(values: Vec<f64>, n_assets: usize) -> Result<Self> {
        Self::new(values, n_assets, default_asset_names(n_assets))
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_assets..(t + 1) * self.n_assets]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_assets)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Returns the sample with every entry negated.
    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.n_assets) {
            return Err(Error::InvalidInput(format!("column {bad} out of range")));
        }
        let values = self
            .rows()
            .flat_map(|r| cols.iter().map(move |&c| r[c]))
            .collect();
        let names = cols.iter().map(|&c| self.asset_names[c].clone()).collect();
        Self::new(values, cols.len(), names)
    }
}

pub fn default_asset_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("asset_{i}")).collect()
}

/// A point of the weight simplex: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        if let Some(x) = w.iter().find(|&&x| x < 0.0) {
            return Err(Error::InvalidInput(format!("negative weight {x}")));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL * (w.len() as f64).max(1.0) {
            return Err(Error::InvalidInput(format!("weights sum to {s}, not 1")));
        }
        Ok(Self(w))
    }

    /// Equal weights over `n` assets.
    pub fn equal(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Equal weights over the listed assets, zero elsewhere.
    pub fn equal_on(n: usize, support: &[usize]) -> Self {
        let mut w = vec![0.0; n];
        for &i in support {
            w[i] = 1.0 / support.len() as f64;
        }
        Self(w)
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    /// Wraps a vector that is feasible by construction (projection output etc.).
    pub(crate) fn from_feasible(w: Vec<f64>) -> Self {
        debug_assert!(w.iter().all(|&x| x >= 0.0));
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for Weights {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Weights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Weights::new(v)
    }
}

impl From<Weights> for Vec<f64> {
    fn from(w: Weights) -> Vec<f64> {
        w.0
    }
}

/// Number of distinct entries of `M3` and `M4` for `n` assets.
pub fn unique_element_counts(n: usize) -> (usize, usize) {
    (n * (n + 1) * (n + 2) / 6, n * (n + 1) * (n + 2) * (n + 3) / 24)
}

#[inline]
fn pair_rank(i: usize, j: usize) -> usize {
    i + j * (j + 1) / 2
}

#[inline]
fn triple_base(k: usize) -> usize {
    k * (k + 1) * (k + 2) / 6
}

#[inline]
fn quad_base(l: usize) -> usize {
    l * (l + 1) * (l + 2) * (l + 3) / 24
}

/// Colex rank of a sorted triple `i <= j <= k`.
pub fn triple_rank(mut idx: [usize; 3]) -> usize {
    idx.sort_unstable();
    pair_rank(idx[0], idx[1]) + triple_base(idx[2])
}

/// Colex rank of a sorted quadruple `i <= j <= k <= l`.
pub fn quad_rank(mut idx: [usize; 4]) -> usize {
    idx.sort_unstable();
    pair_rank(idx[0], idx[1]) + triple_base(idx[2]) + quad_base(idx[3])
}

/// Number of distinct permutations of a sorted index tuple.
fn multiplicity(sorted: &[usize]) -> f64 {
    let mut denom = 1.0;
    let mut run = 1usize;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
            denom *= run as f64;
        } else {
            run = 1;
        }
    }
    let mut num = 1.0;
    for m in 2..=sorted.len() {
        num *= m as f64;
    }
    num / denom
}

/// Portfolio central moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioMoments {
    pub variance: f64,
    pub mu3: f64,
    pub mu4: f64,
}

/// Analytic first and second derivatives of the portfolio moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentDerivatives {
    pub grad_var: Vec<f64>,
    pub grad_mu3: Vec<f64>,
    pub grad_mu4: Vec<f64>,
    /// Row-major N x N.
    pub hess_mu3: Vec<f64>,
    /// Row-major N x N.
    pub hess_mu4: Vec<f64>,
}

/// Covariance, third and fourth co-moments of a return sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CoMomentSet {
    n: usize,
    n_obs: usize,
    mean: Vec<f64>,
    /// Dense row-major N x N.
    m2: Vec<f64>,
    /// Sorted-index entries in colex order.
    m3u: Vec<f64>,
    m4u: Vec<f64>,
    /// Unique entries premultiplied by their permutation counts.
    m3c: Vec<f64>,
    m4c: Vec<f64>,
}

impl CoMomentSet {
    /// Builds a set from explicit unique entries. `m2` is dense row-major.
    pub fn from_unique(
        mean: Vec<f64>,
        m2: Vec<f64>,
        m3u: Vec<f64>,
        m4u: Vec<f64>,
        n_obs: usize,
    ) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidInput("zero assets".into()));
        }
        let (c3, c4) = unique_element_counts(n);
        check_len(n * n, m2.len())?;
        check_len(c3, m3u.len())?;
        check_len(c4, m4u.len())?;
        if mean.iter().chain(&m2).chain(&m3u).chain(&m4u).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("co-moments"));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (m2[i * n + j], m2[j * n + i]);
                if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(1e-300) {
                    return Err(Error::InvalidInput("covariance matrix is not symmetric".into()));
                }
            }
        }
        check_positive_definite(&m2, n)?;
        let mut set = Self {
            n,
            n_obs,
            mean,
            m2,
            m3u,
            m4u,
            m3c: Vec::new(),
            m4c: Vec::new(),
        };
        set.fill_weighted();
        Ok(set)
    }

    fn fill_weighted(&mut self) {
        let n = self.n;
        let mut m3c = Vec::with_capacity(self.m3u.len());
        for k in 0..n {
            for j in 0..=k {
                for i in 0..=j {
                    m3c.push(multiplicity(&[i, j, k]) * self.m3u[m3c.len()]);
                }
            }
        }
        let mut m4c = Vec::with_capacity(self.m4u.len());
        for l in 0..n {
            for k in 0..=l {
                for j in 0..=k {
                    for i in 0..=j {
                        m4c.push(multiplicity(&[i, j, k, l]) * self.m4u[m4c.len()]);
                    }
                }
            }
        }
        self.m3c = m3c;
        self.m4c = m4c;
    }

    pub fn n_assets(&self) -> usize {
        self.n
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Dense row-major covariance.
    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    pub fn m3_unique(&self) -> &[f64] {
        &self.m3u
    }

    pub fn m4_unique(&self) -> &[f64] {
        &self.m4u
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.m2[i * self.n + j]
    }

    /// Third co-moment `s_ijk`, any index order.
    pub fn s(&self, i: usize, j: usize, k: usize) -> f64 {
        self.m3u[triple_rank([i, j, k])]
    }

    /// Fourth co-moment `k_ijkl`, any index order.
    pub fn k(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.m4u[quad_rank([i, j, k, l])]
    }

    /// The N x N^2 matrix `M3` in row-major order, `M3[i][j*N + k] = s_ijk`.
    pub fn m3_block(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[i * n * n + j * n + k] = self.s(i, j, k);
                }
            }
        }
        out
    }

    /// The N x N^3 matrix `M4` in row-major order, `M4[i][(j*N + k)*N + l] = k_ijkl`.
    pub fn m4_block(&self) -> Vec<f64> {
        let n = self.n;
        let n3 = n * n * n;
        let mut out = vec![0.0; n * n3];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        out[i * n3 + (j * n + k) * n + l] = self.k(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    /// Co-moments of the returns scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let f2 = factor * factor;
        let f3 = f2 * factor;
        let f4 = f2 * f2;
        let mut out = Self {
            n: self.n,
            n_obs: self.n_obs,
            mean: self.mean.iter().map(|m| m * factor).collect(),
            m2: self.m2.iter().map(|v| v * f2).collect(),
            m3u: self.m3u.iter().map(|v| v * f3).collect(),
            m4u: self.m4u.iter().map(|v| v * f4).collect(),
            m3c: Vec::new(),
            m4c: Vec::new(),
        };
        out.fill_weighted();
        out
    }

    /// Co-moments of a subset of assets, in the given order.
    pub fn select(&self, assets: &[usize]) -> Result<Self> {
        let m = assets.len();
        if m == 0 || assets.iter().any(|&a| a >= self.n) {
            return Err(Error::InvalidInput("invalid asset selection".into()));
        }
        let mean = assets.iter().map(|&a| self.mean[a]).collect();
        let mut m2 = vec![0.0; m * m];
        for (p, &a) in assets.iter().enumerate() {
            for (q, &b) in assets.iter().enumerate() {
                m2[p * m + q] = self.cov(a, b);
            }
        }
        let mut m3u = Vec::new();
        for k in 0..m {
            for j in 0..=k {
                for i in 0..=j {
                    m3u.push(self.s(assets[i], assets[j], assets[k]));
                }
            }
        }
        let mut m4u = Vec::new();
        for l in 0..m {
            for k in 0..=l {
                for j in 0..=k {
                    for i in 0..=j {
                        m4u.push(self.k(assets[i], assets[j], assets[k], assets[l]));
                    }
                }
            }
        }
        Self::from_unique(mean, m2, m3u, m4u, self.n_obs)
    }

    #[inline]
    pub(crate) fn m2_times(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.m2[i * n..(i + 1) * n];
            *o = row.iter().zip(w).map(|(a, b)| a * b).sum();
        }
    }

    /// Writes the gradient of `mu4` into `g` and returns `mu4`.
    #[inline]
    pub(crate) fn mu4_grad_into(&self, w: &[f64], g: &mut [f64]) -> f64 {
        g.iter_mut().for_each(|x| *x = 0.0);
        let c = &self.m4c;
        let mut t = 0;
        for l in 0..self.n {
            let wl = w[l];
            for k in 0..=l {
                let wk = w[k];
                let wkl = wk * wl;
                let mut gk = 0.0;
                let mut gl = 0.0;
                for j in 0..=k {
                    let wj = w[j];
                    let mut gj = 0.0;
                    for i in 0..=j {
                        let ct = c[t];
                        t += 1;
                        let wi = w[i];
                        let cwij = ct * wi * wj;
                        g[i] += ct * wj * wkl;
                        gj += ct * wi * wkl;
                        gk += cwij * wl;
                        gl += cwij * wk;
                    }
                    g[j] += gj;
                }
                g[k] += gk;
                g[l] += gl;
            }
        }
        // Euler: w . grad mu4 = 4 mu4.
        0.25 * w.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Writes the gradient of `mu3` into `g` and returns `mu3`.
    pub(crate) fn mu3_grad_into(&self, w: &[f64], g: &mut [f64]) -> f64 {
        g.iter_mut().for_each(|x| *x = 0.0);
        let c = &self.m3c;
        let mut t = 0;
        for k in 0..self.n {
            let wk = w[k];
            for j in 0..=k {
                let wj = w[j];
                for i in 0..=j {
                    let ct = c[t];
                    t += 1;
                    let wi = w[i];
                    g[i] += ct * wj * wk;
                    g[j] += ct * wi * wk;
                    g[k] += ct * wi * wj;
                }
            }
        }
        w.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>() / 3.0
    }

    fn check_weights(&self, w: &[f64]) -> Result<()> {
        check_len(self.n, w.len())?;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        Ok(())
    }

    /// Variance, third and fourth central moments of the portfolio `w`.
    ///
    /// `w` need not lie on the simplex; the formulas are the raw quadratic,
    /// cubic and quartic forms.
    pub fn portfolio_moments(&self, w: &[f64]) -> Result<PortfolioMoments> {
        self.check_weights(w)?;
        Ok(self.moments_unchecked(w))
    }

    pub(crate) fn moments_unchecked(&self, w: &[f64]) -> PortfolioMoments {
        let mut buf = vec![0.0; self.n];
        self.m2_times(w, &mut buf);
        let variance = dot(w, &buf);
        let mu3 = self.mu3_grad_into(w, &mut buf);
        let mu4 = self.mu4_grad_into(w, &mut buf);
        PortfolioMoments { variance, mu3, mu4 }
    }

    /// `mu4 / variance^2`.
    pub fn portfolio_kurtosis(&self, w: &[f64]) -> Result<f64> {
        self.check_weights(w)?;
        let m = self.moments_unchecked(w);
        if m.variance <= 0.0 {
            return Err(Error::InvalidInput("portfolio variance is zero (zero weight vector)".into()));
        }
        Ok(m.mu4 / (m.variance * m.variance))
    }

    /// `mu3 / variance^(3/2)`.
    pub fn portfolio_skewness(&self, w: &[f64]) -> Result<f64> {
        self.check_weights(w)?;
        let m = self.moments_unchecked(w);
        if m.variance <= 0.0 {
            return Err(Error::InvalidInput("portfolio variance is zero (zero weight vector)".into()));
        }
        Ok(m.mu3 / m.variance.powf(1.5))
    }

    /// Gradients of variance, `mu3`, `mu4` and the Hessians of `mu3`, `mu4`.
    pub fn moment_derivatives(&self, w: &[f64]) -> Result<MomentDerivatives> {
        self.check_weights(w)?;
        let n = self.n;
        let mut grad_var = vec![0.0; n];
        self.m2_times(w, &mut grad_var);
        grad_var.iter_mut().for_each(|x| *x *= 2.0);
        let mut grad_mu3 = vec![0.0; n];
        self.mu3_grad_into(w, &mut grad_mu3);
        let mut grad_mu4 = vec![0.0; n];
        self.mu4_grad_into(w, &mut grad_mu4);

        let mut hess_mu3 = vec![0.0; n * n];
        let mut t = 0;
        for k in 0..n {
            for j in 0..=k {
                for i in 0..=j {
                    let ct = self.m3c[t];
                    t += 1;
                    let idx = [i, j, k];
                    for a in 0..3 {
                        for b in 0..3 {
                            if a != b {
                                let other = idx[3 - a - b];
                                hess_mu3[idx[a] * n + idx[b]] += ct * w[other];
                            }
                        }
                    }
                }
            }
        }

        let mut hess_mu4 = vec![0.0; n * n];
        let mut t = 0;
        for l in 0..n {
            for k in 0..=l {
                for j in 0..=k {
                    for i in 0..=j {
                        let ct = self.m4c[t];
                        t += 1;
                        let idx = [i, j, k, l];
                        for a in 0..4 {
                            for b in 0..4 {
                                if a == b {
                                    continue;
                                }
                                let mut prod = ct;
                                for (c, &ic) in idx.iter().enumerate() {
                                    if c != a && c != b {
                                        prod *= w[ic];
                                    }
                                }
                                hess_mu4[idx[a] * n + idx[b]] += prod;
                            }
                        }
                    }
                }
            }
        }

        Ok(MomentDerivatives { grad_var, grad_mu3, grad_mu4, hess_mu3, hess_mu4 })
    }

    /// Gradient of `mu4 / variance^2` by the quotient rule.
    pub fn kurtosis_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_weights(w)?;
        let mut g = vec![0.0; self.n];
        let mut scratch = vec![0.0; self.n];
        let k = self.kurtosis_grad_into(w, &mut g, &mut scratch);
        if !k.is_finite() {
            return Err(Error::InvalidInput("portfolio variance is zero (zero weight vector)".into()));
        }
        Ok(g)
    }

    /// Hot path: writes the kurtosis gradient into `g` and returns the kurtosis.
    /// `scratch` must have length N.
    #[inline]
    pub(crate) fn kurtosis_grad_into(&self, w: &[f64], g: &mut [f64], scratch: &mut [f64]) -> f64 {
        self.m2_times(w, scratch);
        let var = dot(w, scratch);
        let mu4 = self.mu4_grad_into(w, g);
        let inv_v2 = 1.0 / (var * var);
        let coef = 4.0 * mu4 * inv_v2 / var;
        for (gi, si) in g.iter_mut().zip(scratch.iter()) {
            *gi = *gi * inv_v2 - coef * si;
        }
        mu4 * inv_v2
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Rejects `m` unless Cholesky succeeds and the eigenvalue ratio exceeds [`PD_RATIO`].
pub fn check_positive_definite(m: &[f64], n: usize) -> Result<()> {
    let mat = DMatrix::from_row_slice(n, n, m);
    let eig = SymmetricEigen::new(mat.clone());
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if mat.cholesky().is_none() || !(min > PD_RATIO * max) || max <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min, max_eigenvalue: max });
    }
    Ok(())
}

struct Partial {
    m2: Vec<f64>,
    m3: Vec<f64>,
    m4: Vec<f64>,
}

impl Partial {
    fn zeros(n: usize) -> Self {
        let (c3, c4) = unique_element_counts(n);
        Self { m2: vec![0.0; n * (n + 1) / 2], m3: vec![0.0; c3], m4: vec![0.0; c4] }
    }

    fn add(&mut self, other: &Partial) {
        for (a, b) in self.m2.iter_mut().zip(&other.m2) {
            *a += b;
        }
        for (a, b) in self.m3.iter_mut().zip(&other.m3) {
            *a += b;
        }
        for (a, b) in self.m4.iter_mut().zip(&other.m4) {
            *a += b;
        }
    }
}

fn accumulate_chunk(rows: &[f64], n: usize, mean: &[f64]) -> Partial {
    let mut p = Partial::zeros(n);
    let mut d = vec![0.0; n];
    let mut pp = vec![0.0; n * (n + 1) / 2];
    for row in rows.chunks_exact(n) {
        for (di, (r, m)) in d.iter_mut().zip(row.iter().zip(mean)) {
            *di = r - m;
        }
        for j in 0..n {
            let base = j * (j + 1) / 2;
            for i in 0..=j {
                pp[base + i] = d[i] * d[j];
            }
        }
        for (a, b) in p.m2.iter_mut().zip(&pp) {
            *a += b;
        }
        // s_ijk = pp(i,j) d_k; for fixed k the (i,j) pairs with j <= k are pp[..len].
        for k in 0..n {
            let len = (k + 1) * (k + 2) / 2;
            let base = triple_base(k);
            let dk = d[k];
            for (acc, v) in p.m3[base..base + len].iter_mut().zip(&pp[..len]) {
                *acc += v * dk;
            }
        }
        // k_ijkl = pp(i,j) pp(k,l); for fixed (k,l) the (i,j) pairs with j <= k are pp[..len].
        for l in 0..n {
            let lb = quad_base(l);
            for k in 0..=l {
                let pkl = pp[pair_rank(k, l)];
                let len = (k + 1) * (k + 2) / 2;
                let base = lb + triple_base(k);
                for (acc, v) in p.m4[base..base + len].iter_mut().zip(&pp[..len]) {
                    *acc += v * pkl;
                }
            }
        }
    }
    p
}

/// Number of chunks processed per parallel batch before the ordered reduction.
const BATCH_CHUNKS: usize = 64;

/// Estimates covariance, third and fourth central co-moments (divide-by-T).
pub fn build_comoments(sample: &ReturnSample) -> Result<CoMomentSet> {
    let n = sample.n_assets();
    let t_obs = sample.n_obs();
    let values = sample.values();
    let chunk_len = CHUNK_ROWS * n;

    let mut sums = vec![0.0; n];
    for chunk in values.chunks(chunk_len) {
        let mut part = vec![0.0; n];
        for row in chunk.chunks_exact(n) {
            for (p, r) in part.iter_mut().zip(row) {
                *p += r;
            }
        }
        for (s, p) in sums.iter_mut().zip(&part) {
            *s += p;
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / t_obs as f64).collect();

    let chunks: Vec<&[f64]> = values.chunks(chunk_len).collect();
    let mut total = Partial::zeros(n);
    for batch in chunks.chunks(BATCH_CHUNKS) {
        let partials: Vec<Partial> = batch
            .par_iter()
            .map(|rows| accumulate_chunk(rows, n, &mean))
            .collect();
        for p in &partials {
            total.add(p);
        }
    }

    let inv_t = 1.0 / t_obs as f64;
    let mut m2 = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..=j {
            let v = total.m2[pair_rank(i, j)] * inv_t;
            m2[i * n + j] = v;
            m2[j * n + i] = v;
        }
    }
    let m3u = total.m3.iter().map(|v| v * inv_t).collect();
    let m4u = total.m4.iter().map(|v| v * inv_t).collect();
    CoMomentSet::from_unique(mean, m2, m3u, m4u, t_obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iid_population(n: usize, kurt: f64) -> CoMomentSet {
        // Unit-variance, uncorrelated, symmetric margins with independent components.
        let mut m2 = vec![0.0; n * n];
        for i in 0..n {
            m2[i * n + i] = 1.0;
        }
        let (c3, _) = unique_element_counts(n);
        let mut m4u = Vec::new();
        for l in 0..n {
            for k in 0..=l {
                for j in 0..=k {
                    for i in 0..=j {
                        let v = if i == l {
                            kurt
                        } else if i == j && k == l {
                            1.0
                        } else {
                            0.0
                        };
                        m4u.push(v);
                    }
                }
            }
        }
        CoMomentSet::from_unique(vec![0.0; n], m2, vec![0.0; c3], m4u, 0).unwrap()
    }

    #[test]
    fn counts_match_closed_forms() {
        assert_eq!(unique_element_counts(2), (4, 5));
        assert_eq!(unique_element_counts(3), (10, 15));
        assert_eq!(unique_element_counts(10), (220, 715));
        assert_eq!(unique_element_counts(100), (171_700, 4_421_275));
    }

    #[test]
    fn ranks_are_consecutive_in_loop_order() {
        let n = 5;
        let mut t = 0;
        for l in 0..n {
            for k in 0..=l {
                for j in 0..=k {
                    for i in 0..=j {
                        assert_eq!(quad_rank([l, i, k, j]), t);
                        t += 1;
                    }
                }
            }
        }
        assert_eq!(t, unique_element_counts(n).1);
    }

    #[test]
    fn multiplicities() {
        assert_eq!(multiplicity(&[0, 0, 0, 0]), 1.0);
        assert_eq!(multiplicity(&[0, 0, 1, 1]), 6.0);
        assert_eq!(multiplicity(&[0, 1, 2, 3]), 24.0);
        assert_eq!(multiplicity(&[0, 0, 0, 1]), 4.0);
        assert_eq!(multiplicity(&[0, 0, 1, 2]), 12.0);
        assert_eq!(multiplicity(&[1, 1, 2]), 3.0);
    }

    #[test]
    fn symmetric_four_point_sample() {
        let s = ReturnSample::with_default_names(vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0], 2)
            .unwrap();
        let c = build_comoments(&s).unwrap();
        assert_eq!(c.m2(), &[0.5, 0.0, 0.0, 0.5]);
        assert!(c.m3_unique().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_singular_covariance() {
        let s = ReturnSample::with_default_names(vec![1.0, 1.0, -1.0, -1.0, 2.0, 2.0], 2).unwrap();
        assert!(matches!(build_comoments(&s), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn rejects_non_finite_and_short_samples() {
        assert!(ReturnSample::with_default_names(vec![1.0, f64::NAN, 0.0, 1.0], 2).is_err());
        assert!(ReturnSample::with_default_names(vec![1.0, 2.0], 2).is_err());
    }

    #[test]
    fn two_iid_assets_equal_weight_kurtosis() {
        let c = iid_population(2, 6.0);
        let k = c.portfolio_kurtosis(&[0.5, 0.5]).unwrap();
        assert!((k - 4.5).abs() < 1e-14);
        let m = c.portfolio_moments(&[0.5, 0.5]).unwrap();
        assert!((m.mu4 - 1.125).abs() < 1e-14);
    }

    #[test]
    fn unit_vector_extracts_own_moments() {
        let c = iid_population(3, 6.0);
        let m = c.portfolio_moments(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.variance, 1.0);
        assert_eq!(m.mu4, 6.0);
        assert_eq!(m.mu3, 0.0);
    }

    #[test]
    fn zero_weights_rejected() {
        let c = iid_population(2, 6.0);
        assert!(c.portfolio_kurtosis(&[0.0, 0.0]).is_err());
        assert!(c.portfolio_kurtosis(&[1.0]).is_err());
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(vec![0.5, 0.5]).is_ok());
        assert!(Weights::new(vec![0.6, 0.5]).is_err());
        assert!(Weights::new(vec![1.5, -0.5]).is_err());
        assert!(Weights::new(vec![]).is_err());
        let w: std::result::Result<Weights, _> = serde_json::from_str("[0.25, 0.75]");
        assert!(w.is_ok());
        let w: std::result::Result<Weights, _> = serde_json::from_str("[-0.25, 1.25]");
        assert!(w.is_err());
    }

    #[test]
    fn select_and_scale() {
        let c = iid_population(3, 6.0);
        let sub = c.select(&[2, 0]).unwrap();
        assert_eq!(sub.n_assets(), 2);
        assert_eq!(sub.k(0, 0, 1, 1), 1.0);
        let sc = c.scaled(2.0);
        let w = [0.2, 0.3, 0.5];
        let a = c.portfolio_kurtosis(&w).unwrap();
        let b = sc.portfolio_kurtosis(&w).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
