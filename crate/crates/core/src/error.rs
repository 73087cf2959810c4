use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid cell: {0}")]
    InvalidCell(String),

    #[error("cells {first} and {second} overlap")]
    OverlappingCells { first: usize, second: usize },

    /// A test function outside the open sup-norm ball of radius 1/2.
    #[error("{}: sup norm {norm_inf} is not below 1/2", index.map_or_else(|| "function".to_string(), |i| format!("function #{i}")))]
    Domain { index: Option<usize>, norm_inf: f64 },

    #[error("{0}")]
    DomainViolation(String),

    #[error("overflow while computing the {n}-particle inner product")]
    Overflow { n: usize },

    #[error("tail majorant does not contract at N = {n} (ratio {ratio})")]
    TailNotContracting { n: usize, ratio: f64 },

    #[error("support of measure {measure} lies outside the rearrangement sources")]
    UnmappedSupport { measure: f64 },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("coupling constant must be positive and finite, got {0}")]
    InvalidCoupling(f64),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Errors that stem from leaving the mathematical domain rather than from
    /// malformed input.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::DomainViolation(_)
                | Error::Overflow { .. }
                | Error::TailNotContracting { .. }
                | Error::UnmappedSupport { .. }
                | Error::PreconditionFailed(_)
                | Error::ConvergenceFailure { .. }
        )
    }
}
