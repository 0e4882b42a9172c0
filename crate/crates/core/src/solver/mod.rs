//! Weighted-TV fully constrained unmixing by ADMM, and the reweighted outer loop
//! for abundance-derived weights.

mod admm;
mod reweighted;
pub mod updates;

pub use admm::{extract_abundances, objective, unmix};
pub use reweighted::reweighted_unmix;
pub use updates::{project_nonnegative, project_sum_to_one, soft_threshold, SolverState};

use crate::data::AbundanceImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Regularization strength `lambda >= 0`.
    pub lambda: f64,
    /// Augmented-Lagrangian penalty `mu > 0`.
    pub mu: f64,
    pub max_iterations: usize,
    /// Threshold on the relative primal and dual residuals.
    pub tolerance: f64,
    /// Maximum number of reweighting rounds.
    pub outer_max: usize,
    /// Relative change of `A` that stops the reweighting.
    pub outer_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            mu: 0.05,
            max_iterations: 500,
            tolerance: 1e-5,
            outer_max: 5,
            outer_tolerance: 1e-3,
        }
    }
}

impl SolverOptions {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::validation(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::validation(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::validation("tolerance must be > 0"));
        }
        if !(self.outer_tolerance.is_finite() && self.outer_tolerance > 0.0) {
            return Err(Error::validation("outer tolerance must be > 0"));
        }
        if self.max_iterations == 0 || self.outer_max == 0 {
            return Err(Error::validation("iteration limits must be positive"));
        }
        Ok(())
    }
}

/// Absolute primal and dual residual norms of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPoint {
    pub primal: f64,
    pub dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnmixResult {
    /// Simplex-feasible abundances.
    pub abundances: AbundanceImage,
    /// `1/2 ||Y - E U||^2 + lambda ||U W||_{1,1}` at each iteration.
    pub objective_trace: Vec<f64>,
    pub residual_trace: Vec<ResidualPoint>,
    /// Total ADMM iterations (summed over reweighting rounds).
    pub iterations_used: usize,
    pub converged: bool,
    /// Number of ADMM solves (1 unless reweighted).
    pub outer_iterations: usize,
}
