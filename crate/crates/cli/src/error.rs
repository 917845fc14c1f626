use std::fmt;

use dualitylab::harness::HarnessError;
use dualitylab::io::IoError;
use dualitylab::{ModelError, SolveError};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Validation(String),
    NonConvergence(String),
    /// A check failed under `--strict`.
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Validation(_) => 2,
            Self::NonConvergence(_) => 3,
            Self::Check(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "invalid configuration: {m}"),
            Self::Validation(m) => write!(f, "validation failed: {m}"),
            Self::NonConvergence(m) => write!(f, "solver failed: {m}"),
            Self::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::InvalidInput(_) | SolveError::TooLarge(_) => Self::Config(e.to_string()),
            // no martingale density: a property of the model
            SolveError::Infeasible(_) => Self::Validation(e.to_string()),
            SolveError::NonConvergence { .. } | SolveError::ValueDivergence(_) => Self::NonConvergence(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Solve(s) => s.into(),
            HarnessError::Model(m) => m.into(),
            HarnessError::Precondition(_) | HarnessError::Grid(_) => Self::Config(e.to_string()),
            HarnessError::LinearProgram(_) => Self::NonConvergence(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Model(m) => m.into(),
            other => Self::Config(other.to_string()),
        }
    }
}
