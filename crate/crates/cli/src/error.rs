//! CLI error taxonomy mapped to process exit codes.

use thiserror::Error;

use chatox_core::analysis::AnalysisError;
use chatox_core::classify::{BackendError, ClassifyError};
use chatox_core::ingest::IngestError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Data(_) => 5,
        }
    }

    /// Machine-readable error record printed to stderr on failure.
    pub fn record(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Config(_) => "config",
            CliError::MissingInput(_) => "missing_input",
            CliError::Backend(_) => "backend",
            CliError::Data(_) => "data",
        };
        serde_json::json!({
            "kind": "error",
            "error": kind,
            "exit_code": self.exit_code(),
            "detail": self.to_string(),
        })
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::FileNotReadable { .. } => CliError::MissingInput(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::BackendUnavailable { .. } | ClassifyError::Backend(_) => {
                CliError::Backend(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        CliError::Backend(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Classify(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("i/o error: {e}"))
    }
}
