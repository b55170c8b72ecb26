use std::fmt;
use std::path::Path;

use fewshot_client::ClientError;
use fewshot_core::bench::BenchError;
use fewshot_core::sampler::SamplerError;
use fewshot_core::store::StoreError;
use serde_json::json;

/// A failed command. Validation problems exit with 2, everything else with 1.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    Validation { line: Option<usize>, message: String },
    Runtime(String),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self::Validation {
            line: None,
            message: message.into(),
        }
    }

    pub fn at_line(line: usize, message: impl Into<String>) -> Self {
        Self::Validation {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self::Runtime(message.into())
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::Runtime(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Validation { .. } => 2,
            Self::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Validation { .. } => "validation",
            Self::Runtime(_) => "runtime",
        }
    }

    /// Single-line JSON for standard error.
    pub fn to_json_line(&self) -> String {
        let mut v = json!({"error": self.kind(), "message": self.message()});
        if let Self::Validation { line: Some(line), .. } = self {
            v["line"] = json!(line);
        }
        v.to_string()
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Runtime(m) | Self::Validation { message: m, .. } => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation {
                line: Some(line),
                message,
            } => write!(f, "line {line}: {message}"),
            _ => f.write_str(self.message()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let line = match &e {
            StoreError::Io(_) => return Self::Runtime(e.to_string()),
            StoreError::Malformed { line, .. }
            | StoreError::DimensionMismatch { line, .. }
            | StoreError::DuplicateId { line, .. }
            | StoreError::NonFinite { line, .. }
            | StoreError::EmptyEmbedding { line, .. } => Some(*line),
            StoreError::Empty | StoreError::ZeroNorm { .. } => None,
        };
        Self::Validation {
            line,
            message: e.to_string(),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Sampler(s) => s.into(),
            BenchError::Config(_) => Self::validation(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::InvalidConfig(_) | ClientError::EmptyInput => Self::validation(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}
