use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("moment of order {0} is not supported (maximum is 6)")]
    UnsupportedMoment(u32),

    #[error("unsupported kernel family: {0}")]
    UnsupportedKernel(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("minimization failed: {message} (bracket [{lo}, {hi}], {expansions} expansions)")]
    Search {
        message: String,
        lo: f64,
        hi: f64,
        expansions: u32,
    },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("group {group}: {source}")]
    Group {
        group: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("all prior weights are zero")]
    DegeneratePrior,

    #[error("infeasible group-size constraints: {0}")]
    Infeasible(String),

    #[error("chunk {path}: {message}")]
    Chunk { path: PathBuf, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerical machinery itself (bracket
    /// failures, degenerate data) as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Search { .. } | Error::DegenerateSample(_) | Error::DegeneratePrior => true,
            Error::Group { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) | Error::Chunk { .. } => true,
            Error::Group { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
