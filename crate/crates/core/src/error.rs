use std::fmt;

use thiserror::Error;

/// Syntax or vocabulary error while reading an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    /// Byte offset for infix text, token index for prefix input.
    pub position: usize,
}

impl ParseError {
    pub(crate) fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError { message: message.into(), position }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at position {}", self.message, self.position)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("{path}:{line}: {source}")]
    ParseFile { path: String, line: usize, source: ParseError },

    #[error("expected {expected} coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },

    #[error("empty data")]
    EmptyData,

    #[error("expression uses x{index} but the data has {columns} columns")]
    Arity { index: usize, columns: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown problem '{id}' (valid ids: {valid})")]
    UnknownProblem { id: String, valid: String },

    #[error("no candidate skeletons for x{0}")]
    NoCandidates(usize),

    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Error {
    /// Tags the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage { stage: stage.into(), source: Box::new(self) }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// True for errors caused by bad input (as opposed to failures during a run).
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Parse(_)
            | Error::ParseFile { .. }
            | Error::Config(_)
            | Error::UnknownProblem { .. }
            | Error::Io { .. }
            | Error::Invalid(_) => true,
            Error::Stage { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
