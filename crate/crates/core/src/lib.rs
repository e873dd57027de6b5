//! Portfolio dimensionality and global minimization of portfolio kurtosis.
//!
//! * [`comoments`]: sample co-moment matrices, portfolio moments and derivatives.
//! * [`retsim`]: meta-Gaussian return simulator (NIG margins, Gaussian copula).
//! * [`divmeasure`]: diversification measure and portfolio dimensionality.
//! * [`subsolver`]: dense LP and small MILP solvers.
//! * [`bbsolve`]: branch-and-bound over simplicial partitions of the weight simplex.
//! * [`gld`]: multistart projected Gradient Langevin Dynamics.
//! * [`harness`]: experiment configuration, file formats and runners.

pub mod bbsolve;
pub mod comoments;
pub mod divmeasure;
pub mod error;
pub mod gld;
pub mod harness;
pub mod numerics;
pub mod retsim;
pub mod rng;
pub mod simplex;
pub mod subsolver;

pub use comoments::{build_comoments, unique_element_counts, CoMomentSet, ReturnSample, Weights};
pub use error::{Error, Result};
