use std::fmt;

use serde_json::json;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Input(String),
    Solver(String),
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Solver(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Solver(_) => "solver",
            CliError::NonConvergence(_) => "non_convergence",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Input(m) | CliError::Solver(m) | CliError::NonConvergence(m) => m,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.message() } })
    }

    pub fn context(self, what: &str) -> Self {
        let wrap = |m: String| format!("{what}: {m}");
        match self {
            CliError::Config(m) => CliError::Config(wrap(m)),
            CliError::Input(m) => CliError::Input(wrap(m)),
            CliError::Solver(m) => CliError::Solver(wrap(m)),
            CliError::NonConvergence(m) => CliError::NonConvergence(wrap(m)),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<asyrgs_core::Error> for CliError {
    fn from(e: asyrgs_core::Error) -> Self {
        use asyrgs_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParameter(_) | E::ScheduleViolation { .. } | E::EnumerationCap { .. } | E::InstrumentationDisabled => {
                CliError::Config(msg)
            }
            E::Io { .. }
            | E::Parse { .. }
            | E::IndexOutOfBounds { .. }
            | E::DuplicateEntry { .. }
            | E::DimensionMismatch { .. }
            | E::NotSquare { .. }
            | E::NotSymmetric
            | E::BadDiagonal { .. }
            | E::ZeroColumn { .. }
            | E::NotPositiveDefinite { .. }
            | E::TooLarge { .. } => CliError::Input(msg),
            E::NoConvergence { .. } | E::Spawn(_) => CliError::Solver(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
