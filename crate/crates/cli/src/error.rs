use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] ktnext::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use ktnext::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Format(_) => 4,
            CliError::Numeric(_) => 5,
            CliError::Core(e) => match e {
                E::InvalidSpec(_) | E::InvalidArgument(_) | E::EmptyVolume => 2,
                E::Io(_) | E::EmptyDataset => 3,
                E::Format(_) | E::DimensionMismatch(_) | E::ParamMismatch(_) | E::WrongDomain { .. } => 4,
                E::NonFinite(_) | E::NonFiniteLoss { .. } | E::UndefinedMetric(_) => 5,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches the offending path to I/O failures from the library.
pub fn at(path: &Path) -> impl Fn(ktnext::Error) -> CliError + '_ {
    move |e| match e {
        ktnext::Error::Io(source) => CliError::io(path, source),
        ktnext::Error::Format(f) => CliError::Format(format!("{}: {f}", path.display())),
        other => CliError::Core(other),
    }
}
