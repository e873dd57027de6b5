//! Dense LP solver (two-phase revised primal simplex) and a small MILP
//! solver by branch and bound on binaries.

pub mod lp;
pub mod milp;

pub use lp::{solve_lp, LpProblem, LpSolution, LpStatus, FEAS_TOL, OPT_TOL};
pub use milp::{solve_milp, solve_milp_with, MilpOptions, MilpProblem, MilpSolution, DEFAULT_BINARY_BUDGET, INT_TOL};
