//! Meta-Gaussian return simulator: NIG (or Gaussian) margins joined by a
//! Gaussian copula whose correlation is adjusted so that the linear
//! correlation of the returns hits a target.

pub mod copula;
pub mod margin;
pub mod nig;
pub mod sample;

pub use copula::{adjust_correlation, rho_out, MarginNodes};
pub use margin::{Margin, MarginDist, MarginSpec, NigTable};
pub use nig::{nig_moments, nig_params_from_moments, nig_pdf, MarginTarget, NigParams};
pub use sample::{
    constant_correlation, ks_critical_1pct, ks_statistic, pearson, sample_meta_gaussian, MetaGaussianSpec,
};
