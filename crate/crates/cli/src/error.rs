use std::path::PathBuf;

use mstates_core::ErrorClass;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mstates_core::Error),

    #[error("{0}")]
    Usage(String),

    #[error("model/config mismatch: {0}")]
    ModelMismatch(String),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => "usage",
                ErrorClass::Data => "data",
                ErrorClass::Numerical => "numerical",
            },
            CliError::Usage(_) => "usage",
            CliError::ModelMismatch(_) | CliError::Write { .. } => "data",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => 2,
            "numerical" => 4,
            _ => 3,
        }
    }

    /// One-line JSON record for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "code": self.exit_code(),
            "message": self.to_string().replace('\n', " "),
        })
        .to_string()
    }
}
