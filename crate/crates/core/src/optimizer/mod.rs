//! Joint bias and power allocation: the iterative convexification solver, its
//! max-energy LP variant and the equal-bias baseline.

mod barrier;
mod baseline;
mod dual;
mod iterative;
mod model;

pub use baseline::{max_equal_bias, min_equal_bias, solve_baseline};
pub use dual::{kkt_power, lambda_from_equality, update_duals, DualState};
pub use iterative::{solve_max_energy, solve_weighted};
pub use model::{linearize, LinearizedModel};

use crate::utility::Allocation;

/// How each convexified subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualMethod {
    /// Interior-point solve of every subproblem to machine precision; the
    /// multipliers are read off the solution.
    #[default]
    Exact,
    /// One closed-form power update and one projected subgradient step per
    /// outer iteration.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative bias-change threshold `‖b - b̂‖ < tol ‖b̂‖`.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Keep iterating past `tolerance` while the bias change still shrinks,
    /// down to [`POLISH_TOLERANCE`].
    pub polish: bool,
    pub dual_method: DualMethod,
    /// Seed for random initial multipliers (subgradient only); zeros if `None`.
    pub random_initial_duals: Option<u64>,
    /// Base subgradient step, relative to the natural multiplier scale.
    pub step0: f64,
}

/// Bias-change level at which polishing stops.
pub const POLISH_TOLERANCE: f64 = 1e-14;

/// Relative slack used when deciding whether an iterate may be returned.
pub const ACCEPT_TOL: f64 = 1e-10;

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iter: 200,
            polish: true,
            dual_method: DualMethod::Exact,
            random_initial_duals: None,
            step0: 1e-2,
        }
    }
}

/// Which requirement could not be met.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintClass {
    /// Rate thresholds need more amplitude than the linear region allows.
    Rate,
    /// Energy thresholds exceed what the largest admissible bias delivers.
    Energy,
    /// The equal-bias window is empty (`b_min > b_max`).
    EqualBias,
    /// A convexified subproblem had no feasible point.
    Surrogate,
    /// No candidate met every constraint at once (grid search).
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Ok,
    Infeasible(ConstraintClass),
    /// Iteration budget spent before the bias settled; best feasible iterate returned.
    MaxIter,
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Ok => "ok",
            SolveStatus::Infeasible(_) => "infeasible",
            SolveStatus::MaxIter => "max_iter",
        }
    }

    pub fn has_solution(&self) -> bool {
        !matches!(self, SolveStatus::Infeasible(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Weighted objective of this iterate (true model, not the surrogate).
    pub objective: f64,
    /// Best feasible objective seen so far.
    pub best_objective: f64,
    /// `‖b - b̂‖₂`.
    pub bias_step: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub allocation: Allocation,
    pub objective: f64,
    pub sum_rate: f64,
    pub total_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// First iteration at which the bias change met `tolerance`.
    pub converged_at: Option<usize>,
    pub trace: Vec<TraceEntry>,
    pub status: SolveStatus,
    /// Multipliers of the last subproblem, when the method produces them.
    pub duals: Option<DualState>,
}
