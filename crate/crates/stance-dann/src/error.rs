use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: expected header `{expected}`, found `{found}`", path.display())]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{}, line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}, line {line}: unknown body id `{body_id}`", path.display())]
    UnknownBodyId {
        path: PathBuf,
        line: u64,
        body_id: String,
    },

    #[error("{}, line {line}: unknown stance `{value}`", path.display())]
    UnknownStance {
        path: PathBuf,
        line: u64,
        value: String,
    },

    #[error("{}, line {line}: unknown label `{value}`", path.display())]
    UnknownLabel {
        path: PathBuf,
        line: u64,
        value: String,
    },

    #[error("{}: labels required, {missing} records are unlabeled", path.display())]
    LabelsRequired { path: PathBuf, missing: usize },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] stance_dann_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }
}
