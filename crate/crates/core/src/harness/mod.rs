//! Experiment configuration, file formats and runners behind the CLI.
//!
//! Config precedence: built-in defaults, then the JSON config file, then
//! command-line overrides.

mod io;
mod run;

pub use io::{
    read_json, read_moments, read_returns_csv, read_weights, write_json, write_moments, write_returns_csv,
    write_trace_csv, write_tidy_csv, MomentsFile, Provenance, ResultFile,
};
pub use run::{
    bench, dimensionality_report, load_comoments, optimize_bb, optimize_gld, reference_asset, simulate,
    toy_example, toy_universe, BenchReport, DimensionalityReport, EnvFingerprint, RunRecord, ToyRow, ToySolver,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bbsolve::BbConfig;
use crate::divmeasure::NuMeasure;
use crate::error::{Error, Result};
use crate::gld::GldConfig;
use crate::retsim::{constant_correlation, MarginSpec, MarginTarget, MetaGaussianSpec};

/// Version tag written into every result file.
pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrelationSpec {
    Homogeneous { rho: f64 },
    /// Row-major N x N target correlation.
    Matrix { values: Vec<f64> },
    /// Three assets, correlation `rho` between the first two, zero otherwise.
    Toy { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniverseSpec {
    pub n_assets: usize,
    /// Margin shared by all assets, unless `margins` is given.
    pub margin: MarginSpec,
    pub margins: Option<Vec<MarginSpec>>,
    pub correlation: CorrelationSpec,
}

impl Default for UniverseSpec {
    fn default() -> Self {
        Self {
            n_assets: 3,
            margin: MarginSpec::Moments(MarginTarget::symmetric(6.0)),
            margins: None,
            correlation: CorrelationSpec::Homogeneous { rho: -0.2 },
        }
    }
}

impl UniverseSpec {
    pub fn meta_gaussian(&self) -> Result<MetaGaussianSpec> {
        let n = self.n_assets;
        if n == 0 {
            return Err(Error::InvalidInput("universe needs at least one asset".into()));
        }
        let margins = match &self.margins {
            Some(m) if m.len() != n => {
                return Err(Error::DimensionMismatch { expected: n, got: m.len() });
            }
            Some(m) => m.clone(),
            None => vec![self.margin; n],
        };
        let corr = match &self.correlation {
            CorrelationSpec::Homogeneous { rho } => constant_correlation(n, *rho),
            CorrelationSpec::Matrix { values } => values.clone(),
            CorrelationSpec::Toy { rho } => {
                if n != 3 {
                    return Err(Error::InvalidInput("the toy correlation needs exactly 3 assets".into()));
                }
                vec![1.0, *rho, 0.0, *rho, 1.0, 0.0, 0.0, 0.0, 1.0]
            }
        };
        MetaGaussianSpec::new(margins, corr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub rho_grid: Vec<f64>,
    pub solver: ToySolver,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            rho_grid: vec![-0.9, -0.7, -0.5, -0.3, 0.0, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99],
            solver: ToySolver::Bb,
        }
    }
}

/// Reference asset for dimensionality reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    /// Reference given directly by its value of `nu`.
    Nu { value: f64 },
    /// NIG reference asset with these moments.
    Moments(MarginTarget),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimensionalityConfig {
    pub weights_file: Option<PathBuf>,
    pub measure: NuMeasure,
    pub reference: ReferenceSpec,
    pub curve_k_max: usize,
}

impl Default for DimensionalityConfig {
    fn default() -> Self {
        Self {
            weights_file: None,
            measure: NuMeasure::ExcessKurtosis,
            reference: ReferenceSpec::Moments(MarginTarget::symmetric(6.0)),
            curve_k_max: 20,
        }
    }
}

/// One run of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub universe: UniverseSpec,
    pub sample_size: usize,
    pub seed: u64,
    /// Use these returns instead of simulating.
    pub returns_file: Option<PathBuf>,
    /// Use these co-moments instead of returns.
    pub moments_file: Option<PathBuf>,
    pub bb: BbConfig,
    pub gld: GldConfig,
    pub toy: ToyConfig,
    pub dimensionality: DimensionalityConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "run".into(),
            universe: UniverseSpec::default(),
            sample_size: 1_000_000,
            seed: 1,
            returns_file: None,
            moments_file: None,
            bb: BbConfig::default(),
            gld: GldConfig::default(),
            toy: ToyConfig::default(),
            dimensionality: DimensionalityConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_size < 2 && self.returns_file.is_none() && self.moments_file.is_none() {
            return Err(Error::InvalidInput("sample_size must be at least 2".into()));
        }
        for f in [&self.returns_file, &self.moments_file, &self.dimensionality.weights_file].into_iter().flatten() {
            if !f.exists() {
                return Err(Error::InvalidInput(format!("file not found: {}", f.display())));
            }
        }
        self.universe.meta_gaussian()?;
        self.bb.validate()?;
        self.gld.validate()?;
        if self.toy.rho_grid.iter().any(|r| !(r.abs() < 1.0)) {
            return Err(Error::InvalidInput("toy rho grid must lie in (-1, 1)".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// with the output directory left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { config_hash: self.hash(), seed: self.seed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        let partial = ExperimentConfig::from_json(r#"{"seed": 9, "universe": {"n_assets": 5}}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.universe.n_assets, 5);
        assert_eq!(partial.bb, BbConfig::default());
        assert_ne!(partial.hash(), c.hash());
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn universe_specs() {
        let u = UniverseSpec { correlation: CorrelationSpec::Toy { rho: 0.5 }, ..Default::default() };
        assert_eq!(u.meta_gaussian().unwrap().target_corr[1], 0.5);
        let bad = UniverseSpec { n_assets: 4, correlation: CorrelationSpec::Toy { rho: 0.5 }, ..Default::default() };
        assert!(bad.meta_gaussian().is_err());
        let wrong = UniverseSpec { margins: Some(vec![MarginSpec::Gaussian { mean: 0.0, sd: 1.0 }]), ..Default::default() };
        assert!(wrong.meta_gaussian().is_err());
    }
}
