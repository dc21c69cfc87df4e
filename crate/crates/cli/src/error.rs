use std::path::Path;

use serde_json::json;
use thiserror::Error;

use qwz_ness::NessError;

use crate::config::Diagnostic;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config: {0}")]
    Config(String),

    #[error("config has {} problem(s): {}", .0.len(), join(.0))]
    Invalid(Vec<Diagnostic>),

    #[error("{point}: {source}")]
    Numerical { point: String, source: NessError },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("output: {0}")]
    Output(String),
}

fn join(ds: &[Diagnostic]) -> String {
    ds.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub(crate) fn from_csv(err: csv::Error) -> Self {
        CliError::Output(err.to_string())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Invalid(_) => "validation",
            CliError::Numerical { .. } => "numerical",
            CliError::Io { .. } => "io",
            CliError::Output(_) => "output",
        }
    }

    /// Machine-readable form written to stderr on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::Invalid(ds) => v["diagnostics"] = json!(ds),
            CliError::Numerical { point, .. } => v["point"] = json!(point),
            CliError::Io { path, .. } => v["path"] = json!(path),
            _ => {}
        }
        v
    }
}
