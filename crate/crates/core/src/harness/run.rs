//! Experiment runners.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{CorrelationSpec, DimensionalityConfig, ExperimentConfig, ReferenceSpec, UniverseSpec};
use crate::bbsolve::{self, BbResult};
use crate::comoments::{build_comoments, CoMomentSet, ReturnSample};
use crate::divmeasure::{diversification, reference_curve, NuMeasure, NuQuality, ReferenceAsset};
use crate::error::{Error, Result};
use crate::gld::{self, GldResult, LocalOptions};
use crate::retsim::{nig_params_from_moments, sample_meta_gaussian, MarginSpec, MarginTarget};

/// Simulated returns for the configured universe.
pub fn simulate(cfg: &ExperimentConfig) -> Result<ReturnSample> {
    let spec = cfg.universe.meta_gaussian()?;
    sample_meta_gaussian(&spec, cfg.sample_size, cfg.seed)
}

/// Co-moments from, in order of preference, the moments file, the returns
/// file, or a fresh simulation. Also returns the asset names.
pub fn load_comoments(cfg: &ExperimentConfig) -> Result<(CoMomentSet, Vec<String>)> {
    if let Some(p) = &cfg.moments_file {
        let (c, f) = super::read_moments(p)?;
        return Ok((c, f.asset_names));
    }
    let sample = match &cfg.returns_file {
        Some(p) => super::read_returns_csv(p)?,
        None => simulate(cfg)?,
    };
    Ok((build_comoments(&sample)?, sample.asset_names().to_vec()))
}

pub fn optimize_bb(c: &CoMomentSet, cfg: &ExperimentConfig) -> Result<BbResult> {
    bbsolve::solve(c, &cfg.bb)
}

pub fn optimize_gld(c: &CoMomentSet, cfg: &ExperimentConfig) -> Result<GldResult> {
    let mut g = cfg.gld.clone();
    g.seed = cfg.seed;
    gld::multistart(c, &g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToySolver {
    Bb,
    Gld,
}

/// Third-asset weights of the three portfolios at one correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub rho: f64,
    pub w3_min_kurtosis: f64,
    pub w3_risk_parity: f64,
    pub w3_diversification_ratio: f64,
    pub min_kurtosis: f64,
    pub weights: Vec<f64>,
}

/// Three unit-variance assets with kurtosis 6, correlation `rho` between
/// the first two and zero otherwise.
pub fn toy_universe(rho: f64) -> UniverseSpec {
    UniverseSpec {
        n_assets: 3,
        margin: MarginSpec::Moments(MarginTarget::symmetric(6.0)),
        margins: None,
        correlation: CorrelationSpec::Toy { rho },
    }
}

/// Runs the toy comparison over `cfg.toy.rho_grid`. The minimum-kurtosis
/// point is the global solver's incumbent refined by local descent.
pub fn toy_example(cfg: &ExperimentConfig) -> Result<Vec<ToyRow>> {
    let mut rows = Vec::new();
    for &rho in &cfg.toy.rho_grid {
        let mut run = cfg.clone();
        run.universe = toy_universe(rho);
        run.returns_file = None;
        run.moments_file = None;
        let (c, _) = load_comoments(&run)?;
        let start = match cfg.toy.solver {
            super::ToySolver::Bb => optimize_bb(&c, &run)?.incumbent,
            super::ToySolver::Gld => optimize_gld(&c, &run)?.best_weights,
        };
        let local = gld::local_minimize(&c, start.as_slice(), &LocalOptions::default())?;
        let w = local.weights.into_inner();
        rows.push(ToyRow {
            rho,
            w3_min_kurtosis: w[2],
            w3_risk_parity: crate::divmeasure::toy_rp_weight(rho)?,
            w3_diversification_ratio: crate::divmeasure::toy_dr_weight(rho)?,
            min_kurtosis: local.value,
            weights: w,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionalityReport {
    pub measure: NuMeasure,
    pub weights: Vec<f64>,
    pub nu_portfolio: f64,
    pub nu_reference: f64,
    pub reference: String,
    pub diversification: f64,
    pub dimensionality: f64,
    pub quality: NuQuality,
    /// `(k, nu)` of the average of `k` iid reference assets.
    pub reference_curve: Vec<(usize, f64)>,
}

pub fn reference_asset(spec: &ReferenceSpec, m: NuMeasure) -> Result<ReferenceAsset> {
    match spec {
        ReferenceSpec::Nu { value } => ReferenceAsset::new(*value, format!("nu = {value}")),
        ReferenceSpec::Moments(t) => ReferenceAsset::from_nig(&nig_params_from_moments(t)?, m),
    }
}

pub fn dimensionality_report(w: &[f64], c: &CoMomentSet, d: &DimensionalityConfig) -> Result<DimensionalityReport> {
    if w.len() != c.n_assets() {
        return Err(Error::DimensionMismatch { expected: c.n_assets(), got: w.len() });
    }
    let weights = crate::comoments::Weights::new(w.to_vec())?;
    let r = reference_asset(&d.reference, d.measure)?;
    let div = diversification(weights.as_slice(), c, &r, d.measure)?;
    let curve = (1..=d.curve_k_max.max(1))
        .map(|k| Ok((k, reference_curve(k as f64, &r)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DimensionalityReport {
        measure: d.measure,
        weights: weights.into_inner(),
        nu_portfolio: div.nu_portfolio,
        nu_reference: r.nu_value,
        reference: r.description,
        diversification: div.measure,
        dimensionality: div.dimensionality,
        quality: div.quality,
        reference_curve: curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFingerprint {
    pub package_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl EnvFingerprint {
    pub fn current() -> Self {
        Self {
            package_version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
        }
    }
}

/// What was run, with what, how long it took and what came out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub environment: EnvFingerprint,
    pub result: serde_json::Value,
}

impl RunRecord {
    pub fn new<T: Serialize>(command: &str, cfg: &ExperimentConfig, seconds: f64, result: &T) -> Result<Self> {
        Ok(Self {
            version: super::FORMAT_VERSION.into(),
            command: command.into(),
            config: cfg.clone(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            wall_clock_seconds: seconds,
            environment: EnvFingerprint::current(),
            result: serde_json::to_value(result)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_assets: usize,
    pub sample_size: usize,
    pub simulate_seconds: f64,
    pub build_moments_seconds: f64,
    pub bb_seconds: f64,
    pub bb_iterations: usize,
    pub gld_seconds: f64,
    pub gld_evaluations: u64,
    pub environment: EnvFingerprint,
}

/// Times the pipeline stages on the configured universe.
pub fn bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    let t0 = Instant::now();
    let sample = simulate(cfg)?;
    let simulate_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let c = build_comoments(&sample)?;
    let build_moments_seconds = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let bb = optimize_bb(&c, cfg)?;
    let bb_seconds = t2.elapsed().as_secs_f64();
    let t3 = Instant::now();
    let g = optimize_gld(&c, cfg)?;
    let gld_seconds = t3.elapsed().as_secs_f64();
    Ok(BenchReport {
        n_assets: c.n_assets(),
        sample_size: sample.n_obs(),
        simulate_seconds,
        build_moments_seconds,
        bb_seconds,
        bb_iterations: bb.iterations,
        gld_seconds,
        gld_evaluations: g.evaluations,
        environment: EnvFingerprint::current(),
    })
}
