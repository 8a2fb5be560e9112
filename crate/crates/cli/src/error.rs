use thiserror::Error;

/// Outcome categories of a run; each maps to exactly one exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed:\n{0}")]
    Validation(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Verification(_) => 5,
        }
    }
}

impl From<rsci_core::Error> for CliError {
    fn from(e: rsci_core::Error) -> Self {
        use rsci_core::Error as E;
        match e {
            E::Domain(_) | E::Instability(_) => CliError::Solver(e.to_string()),
            E::Infeasible(_) | E::Precondition(_) | E::Config(_) => CliError::Validation(e.to_string()),
        }
    }
}
