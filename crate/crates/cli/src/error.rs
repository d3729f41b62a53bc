use femq::FemError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("cannot read {path}: {source}")]
    ReadSpec { path: String, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] FemError),

    #[error("cannot write output: {0}")]
    Write(#[from] std::io::Error),

    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for invalid input, 3 for numerical non-convergence, 4 for exhausted
    /// budgets and size caps, 1 for anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::ReadSpec { .. } => 2,
            CliError::Core(e) => match e {
                FemError::InvalidArgument(_) | FemError::Unsupported(_) | FemError::ZeroNorm(_) => 2,
                FemError::NotConverged(_) | FemError::EigenNotConverged { .. } | FemError::Singular(_) => 3,
                FemError::BudgetExhausted { .. } | FemError::CapExceeded { .. } | FemError::ProbabilityTooSmall(_) => 4,
            },
            CliError::Write(_) | CliError::Csv(_) => 1,
        }
    }
}
