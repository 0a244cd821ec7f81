use std::fmt;
use std::path::PathBuf;

use bid2x_tensor::TensorError;
use thiserror::Error;

/// One offending line of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct LineProblem {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at line {}", self.message, self.line)
    }
}

fn join_problems(problems: &[LineProblem]) -> String {
    problems
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset load failed: {}", join_problems(.0))]
    Load(Vec<LineProblem>),

    #[error("data error: {0}")]
    Data(String),

    #[error("{table} index {index} out of range for vocabulary of {vocab}")]
    Lookup {
        table: &'static str,
        index: usize,
        vocab: usize,
    },

    /// A caller broke a documented precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("trajectory of {needed} slots does not fit length {limit}; split it first")]
    Truncation { needed: usize, limit: usize },

    #[error("non-finite {term} at step {step}: {detail}")]
    Numeric {
        step: usize,
        term: String,
        detail: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
