//! Discrete optimal transport between two weighted point sets.
//!
//! [`sinkhorn`] solves the entropy-regularized problem in the log domain and is
//! what the labeler uses. [`lp_oracle`] solves the unregularized linear program
//! exactly via min-cost flow and exists to check Sinkhorn on small instances.

mod lp;
mod sinkhorn;

use thiserror::Error;

use crate::cost::CostMatrix;
use crate::matrix::Matrix;

pub use lp::{lp_oracle, LP_MAX_POINTS};
pub use sinkhorn::sinkhorn;

/// Tolerance on `|sum(a) - sum(b)|`.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("marginals carry different mass: {0} vs {1}")]
    MarginalMismatch(f64, f64),
    #[error("marginal weight {index} is negative or not finite: {value}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("cost entry ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },
    #[error("cost matrix is {rows}x{cols} but marginals have lengths {a} and {b}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        a: usize,
        b: usize,
    },
    #[error("invalid solver parameters: {0}")]
    InvalidParams(&'static str),
    #[error("problem has {0} points, exact solver is limited to {LP_MAX_POINTS}")]
    TooLarge(usize),
}

/// Parameters of the Sinkhorn solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    /// Entropic regularization strength, in units of the cost.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// L-infinity bound on the marginal residual that counts as converged.
    pub marginal_tolerance: f64,
    /// Run short warm-up stages at larger epsilons before the target one.
    pub warm_start: bool,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            epsilon: 0.01,
            max_iterations: 1000,
            marginal_tolerance: 1e-6,
            warm_start: true,
        }
    }
}

impl SinkhornParams {
    pub fn with_epsilon(epsilon: f64) -> Self {
        SinkhornParams {
            epsilon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(SolverError::InvalidParams("epsilon must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidParams("max_iterations must be at least 1"));
        }
        if !(self.marginal_tolerance > 0.0) {
            return Err(SolverError::InvalidParams(
                "marginal_tolerance must be positive",
            ));
        }
        Ok(())
    }
}

/// A transport plan between two marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub plan: Matrix,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    /// `<C, plan>`.
    pub transport_cost: f64,
    pub converged: bool,
    pub iterations: usize,
    /// L-infinity distance between the plan's row/column sums and the marginals.
    pub marginal_residual: f64,
}

impl Coupling {
    pub(crate) fn from_plan(
        plan: Matrix,
        cost: &CostMatrix,
        a: &[f64],
        b: &[f64],
        iterations: usize,
        tolerance: f64,
    ) -> Coupling {
        let residual = marginal_residual(&plan, a, b);
        Coupling {
            transport_cost: plan.dot(cost),
            converged: residual <= tolerance,
            marginal_residual: residual,
            plan,
            row_marginal: a.to_vec(),
            col_marginal: b.to_vec(),
            iterations,
        }
    }

    /// Per-row transported cost `sum_j C[i][j] * plan[i][j]`.
    pub fn row_costs(&self, cost: &CostMatrix) -> Vec<f64> {
        (0..self.plan.rows())
            .map(|i| {
                self.plan
                    .row(i)
                    .iter()
                    .zip(cost.row(i))
                    .map(|(p, c)| p * c)
                    .sum()
            })
            .collect()
    }
}

/// L-infinity residual of a plan's row and column sums against `a` and `b`.
pub fn marginal_residual(plan: &Matrix, a: &[f64], b: &[f64]) -> f64 {
    let rows = plan.row_sums().into_iter().zip(a).map(|(s, w)| (s - w).abs());
    let cols = plan.col_sums().into_iter().zip(b).map(|(s, w)| (s - w).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Shape, sign, mass and finiteness checks shared by both solvers.
pub(crate) fn validate_problem(cost: &CostMatrix, a: &[f64], b: &[f64]) -> Result<(), SolverError> {
    if cost.row_len() != a.len() || cost.col_len() != b.len() {
        return Err(SolverError::ShapeMismatch {
            rows: cost.row_len(),
            cols: cost.col_len(),
            a: a.len(),
            b: b.len(),
        });
    }
    for (index, &value) in a.iter().chain(b).enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(SolverError::NegativeWeight { index, value });
        }
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if !(sa > 0.0) || (sa - sb).abs() > MASS_TOLERANCE {
        return Err(SolverError::MarginalMismatch(sa, sb));
    }
    for i in 0..cost.row_len() {
        if let Some(j) = cost.row(i).iter().position(|c| !c.is_finite()) {
            return Err(SolverError::NonFiniteCost { row: i, col: j });
        }
    }
    Ok(())
}
