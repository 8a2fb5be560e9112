use thiserror::Error;

/// Failure categories shared by every solver stage.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The constrained optimisation has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// The backward solver left its a-priori envelope or produced non-finite values.
    #[error("solver instability: {0}")]
    Instability(String),
    /// A hypothesis required by the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Inconsistent combination of fields, strategies or settings.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
