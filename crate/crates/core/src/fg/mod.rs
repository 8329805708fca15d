//! Factor graphs over vector-valued variables and a Levenberg–Marquardt
//! MAP solver.

mod check;
mod cholesky;
mod graph;
mod solver;

pub use check::{jacobian_error, numerical_jacobians};
pub use cholesky::EnvelopeCholesky;
pub use graph::{Factor, FactorGraph, JacobianBlock, LinearSystem, Values, VariableKey};
pub use solver::{solve_lm, solve_lm_with, Retraction, SolveStats, SolverConfig, Termination};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FgError {
    #[error("missing value for variable {0}")]
    MissingVariable(VariableKey),
    #[error("factor references undeclared variable {0}")]
    UndeclaredVariable(VariableKey),
    #[error("variable id {} declared twice with different dimensions", .0.id)]
    DuplicateVariable(VariableKey),
    #[error("value for {key} has length {got}")]
    DimensionMismatch { key: VariableKey, got: usize },
    #[error("factor {factor} has invalid sigma {sigma}")]
    InvalidSigma { factor: &'static str, sigma: f64 },
    #[error("factor {factor} ({name}) produced a non-finite residual or Jacobian")]
    NonFinite { factor: usize, name: &'static str },
    #[error("factor {factor} ({name}) returned blocks of the wrong shape")]
    BadFactorShape { factor: usize, name: &'static str },
    #[error("factor evaluation failed: {0}")]
    Evaluation(String),
    #[error("inconsistent window: {0}")]
    Structure(String),
    #[error("factor graph is not connected")]
    Disconnected,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[cfg(test)]
mod tests;
