use std::path::{Path, PathBuf};

use serde::Serialize;
use stratmatch_core::Error as CoreError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(": line {l}")).unwrap_or_default())]
    Config {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        #[source]
        source: CoreError,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Format { path: PathBuf, line: u64, message: String },
    #[error("audit log not found: {}", .0.display())]
    AuditNotFound(PathBuf),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Machine-readable error line written to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}

fn core_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::NamedColumnAbsent(_) => "NamedColumnAbsent",
        CoreError::ParseFailure { .. } => "ParseFailure",
        CoreError::PositivityViolation { .. } => "PositivityViolation",
        CoreError::ShapeMismatch(_) => "ShapeMismatch",
        CoreError::EmptyInput => "EmptyInput",
        CoreError::InsufficientDegreesOfFreedom { .. } => "InsufficientDegreesOfFreedom",
        CoreError::DegenerateSplit => "DegenerateSplit",
        CoreError::NoCandidates(_) => "NoCandidates",
        CoreError::OracleTooLarge(_) => "OracleTooLarge",
        CoreError::StrategyRequiresBinary => "StrategyRequiresBinary",
        CoreError::EstimationImpossible(_) => "EstimationImpossible",
        CoreError::InvalidSample { .. } => "InvalidSample",
        CoreError::InvalidConfig(_) => "InvalidConfig",
        CoreError::InvalidProblem(_) => "InvalidProblem",
    }
}

fn core_exit(e: &CoreError) -> i32 {
    match e {
        CoreError::InvalidConfig(_) | CoreError::InvalidSample { .. } => EXIT_CONFIG,
        CoreError::EstimationImpossible(_)
        | CoreError::NoCandidates(_)
        | CoreError::StrategyRequiresBinary
        | CoreError::InvalidProblem(_)
        | CoreError::OracleTooLarge(_) => EXIT_ESTIMATION,
        _ => EXIT_DATA,
    }
}

impl AppError {
    pub fn data(path: &Path, source: CoreError) -> Self {
        AppError::Data {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Config { .. } => "ConfigError",
            AppError::Usage(_) => "UsageError",
            AppError::Io { .. } => "IoError",
            AppError::Format { .. } => "FormatError",
            AppError::AuditNotFound(_) => "AuditNotFound",
            AppError::Data { source, .. } | AppError::Core(source) => core_kind(source),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } | AppError::Usage(_) => EXIT_CONFIG,
            AppError::Io { .. } | AppError::Format { .. } | AppError::AuditNotFound(_) => EXIT_DATA,
            AppError::Data { source, .. } | AppError::Core(source) => core_exit(source),
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (path, line) = match self {
            AppError::Config { path, line, .. } => (Some(path.display().to_string()), *line),
            AppError::Io { path, .. } | AppError::Data { path, .. } => (Some(path.display().to_string()), None),
            AppError::Format { path, line, .. } => (Some(path.display().to_string()), Some(*line)),
            AppError::AuditNotFound(path) => (Some(path.display().to_string()), None),
            _ => (None, None),
        };
        let line = line.or(match self {
            AppError::Data {
                source: CoreError::ParseFailure { row, .. },
                ..
            } => Some(*row as u64),
            _ => None,
        });
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
            path,
            line,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(AppError::Usage("x".into()).exit_code(), 2);
        assert_eq!(AppError::Core(CoreError::NamedColumnAbsent("y".into())).exit_code(), 3);
        assert_eq!(AppError::Core(CoreError::EstimationImpossible("x".into())).exit_code(), 4);
        assert_eq!(AppError::AuditNotFound("a".into()).exit_code(), 3);
    }

    #[test]
    fn record_carries_line() {
        let e = AppError::data(
            Path::new("d.csv"),
            CoreError::ParseFailure {
                row: 7,
                column: "t".into(),
                reason: "bad".into(),
            },
        );
        let r = e.record();
        assert_eq!(r.error, "ParseFailure");
        assert_eq!(r.line, Some(7));
        assert_eq!(r.path.as_deref(), Some("d.csv"));
    }
}
