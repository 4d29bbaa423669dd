use std::fmt;
use std::path::PathBuf;

use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    StageInputMissing { stage: &'static str, path: PathBuf },
    Io { path: PathBuf, source: std::io::Error },
    SelfCheckFailed(Vec<String>),
    Core(disagree_gat::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::StageInputMissing { .. } => "StageInputMissing",
            CliError::Io { .. } => "Io",
            CliError::SelfCheckFailed(_) => "SelfCheckFailed",
            CliError::Core(e) => e.kind(),
        }
    }

    /// `{"error": <kind>, "message": <text>}` on one line.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::StageInputMissing { stage, path } => {
                write!(f, "`{stage}` needs {}; run the earlier stage first", path.display())
            }
            CliError::Io { path, source } => write!(f, "i/o error on {}: {source}", path.display()),
            CliError::SelfCheckFailed(names) => write!(f, "failed checks: {}", names.join(", ")),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<disagree_gat::Error> for CliError {
    fn from(e: disagree_gat::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
