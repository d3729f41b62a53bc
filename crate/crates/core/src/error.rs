use thiserror::Error;

use crate::solver::CgReport;

pub type Result<T> = std::result::Result<T, FemError>;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("conjugate gradient did not converge after {} iterations (estimated energy error {:.3e})", .0.iterations, .0.final_energy_error_estimate)]
    NotConverged(Box<CgReport>),

    #[error("eigenvalue iteration did not converge: lambda_max ~ {lambda_max:.6e}, lambda_min ~ {lambda_min:.6e}")]
    EigenNotConverged { lambda_max: f64, lambda_min: f64 },

    #[error("sample budget exhausted: requested {requested} shots, {remaining} remaining")]
    BudgetExhausted { requested: u64, remaining: u64 },

    #[error("mesh cap exceeded: {required} degrees of freedom required, cap is {cap}")]
    CapExceeded { required: usize, cap: usize },

    #[error("acceptance probability {0:.3e} is below the simulable floor; precondition the system")]
    ProbabilityTooSmall(f64),

    #[error("zero-norm state: {0}")]
    ZeroNorm(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> FemError {
    FemError::InvalidArgument(msg.into())
}
