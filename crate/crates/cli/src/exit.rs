//! Process exit codes and error classification.

use std::fmt;
use std::path::Path;

use ngs_core::Error;

pub const INVALID: u8 = 2;
pub const MISSING: u8 = 3;
pub const DIVERGED: u8 = 4;
pub const FAILURE: u8 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
    /// Extra context written to the diagnostics file.
    pub details: Option<serde_json::Value>,
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self { code: INVALID, message: msg.into(), details: None }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        let code = if e.kind() == std::io::ErrorKind::NotFound { MISSING } else { FAILURE };
        Self { code, message: format!("{}: {e}", path.display()), details: None }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = Some(details);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parameter(_)
            | Error::Capability(_)
            | Error::Contract(_)
            | Error::DegenerateInput(_)
            | Error::DegenerateLoss(_)
            | Error::FitWindow(_)
            | Error::Ingestion(_)
            | Error::Format(_)
            | Error::Json(_)
            | Error::Csv(_) => INVALID,
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => MISSING,
            Error::Divergence { .. }
            | Error::RolloutDivergence { .. }
            | Error::NanLoss { .. }
            | Error::Numerical(_)
            | Error::StiffnessFailure { .. }
            | Error::Timeout { .. } => DIVERGED,
            _ => FAILURE,
        };
        Self { code, message: e.to_string(), details: None }
    }
}
