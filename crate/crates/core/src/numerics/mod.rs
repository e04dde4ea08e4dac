//! Self-contained numeric kernels: a dense LP solver and a scalar root finder.

mod root;
mod simplex;

pub use root::{bisect, newton_root, MAX_NEWTON_ITER};
pub use simplex::{solve_lp, LpProblem, LpSolution, LpStatus, BLAND_AFTER, PIVOT_TOL};
