use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown key '{key}' (line {line})")]
    UnknownKey { key: String, line: usize },

    #[error("section [{name}] is not used by {command} (line {line})")]
    UnknownSection {
        name: String,
        command: &'static str,
        line: usize,
    },

    #[error("missing required {0}")]
    Missing(String),

    #[error("{}invalid value for '{key}': {reason}", line_prefix(*.line))]
    Invalid {
        key: String,
        line: usize,
        reason: String,
    },

    #[error("bad --set override: {0}")]
    Override(String),

    #[error(transparent)]
    Core(#[from] filter_audit::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

fn line_prefix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

impl CliError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(key: String, line: usize, reason: String) -> Self {
        CliError::Invalid { key, line, reason }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
