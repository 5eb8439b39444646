use thiserror::Error;

use lipobs::observer::DesignError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Config(_) => 3,
            CliError::Failure(_) => 4,
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            DesignError::Synth(_) => CliError::Config(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}
