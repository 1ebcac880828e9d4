use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{0}")]
    Dimension(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse { .. } | CliError::Io { .. } => 3,
            CliError::Dimension(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }

    pub fn parse(path: &std::path::Path, msg: impl ToString) -> Self {
        CliError::Parse { path: path.to_path_buf(), msg: msg.to_string() }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

/// Classifies a library error raised while fitting or evaluating.
impl From<spatmix::Error> for CliError {
    fn from(e: spatmix::Error) -> Self {
        use spatmix::Error as E;
        match e {
            E::Dimension(_) | E::NodeOutOfRange { .. } | E::LabelOutOfRange { .. } => CliError::Dimension(e.to_string()),
            E::Numeric(_) => CliError::Numeric(e.to_string()),
            E::SelfLoop(_) | E::LatticeTooSmall(_) | E::Invalid(_) => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
