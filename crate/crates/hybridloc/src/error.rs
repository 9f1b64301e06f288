//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model evaluation, filtering, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A position coincides (within the geometry epsilon) with an anchor,
    /// making the measurement model singular.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A belief contains non-finite entries or a broken covariance.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A measurement referenced an anchor id that is not in the deployment.
    #[error("unknown anchor id `{0}`")]
    UnknownAnchor(String),

    /// A measurement feed was not ordered by timestamp.
    #[error("out-of-order record {index}: timestamp {timestamp} precedes {previous}")]
    OutOfOrder {
        /// Zero-based index of the offending record in the feed.
        index: usize,
        /// Timestamp of the offending record, seconds.
        timestamp: f64,
        /// Timestamp it should not have preceded, seconds.
        previous: f64,
    },

    /// A linear-algebra step failed; carries condition diagnostics of the
    /// matrix that could not be factored.
    #[error(
        "numerical failure in {context}: matrix not positive definite \
         (dim {dim}, eigenvalue range [{min_eig:e}, {max_eig:e}])"
    )]
    Numerical {
        /// Which computation failed.
        context: String,
        /// Matrix dimension.
        dim: usize,
        /// Smallest eigenvalue of the symmetrized matrix.
        min_eig: f64,
        /// Largest eigenvalue of the symmetrized matrix.
        max_eig: f64,
    },

    /// A text record could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse {
        /// One-based line number in the input text.
        line: usize,
        /// What went wrong.
        message: String,
    },

    /// A scenario configuration was structurally valid but violated an
    /// invariant, or failed to deserialize.
    #[error("config error at `{key}`{}: {message}", fmt_line(.line))]
    Config {
        /// Dotted key path of the offending entry.
        key: String,
        /// One-based line number when it could be located in the source.
        line: Option<usize>,
        /// What went wrong.
        message: String,
    },

    /// A file could not be read or written.
    #[error("i/o error on {path}: {source}")]
    Io {
        /// Path involved in the failed operation.
        path: String,
        /// Underlying error.
        source: std::io::Error,
    },
}

fn fmt_line(line: &Option<usize>) -> String {
    match line {
        Some(n) => format!(" (line {n})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateGeometry(msg.into())
    }
}
