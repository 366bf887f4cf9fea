use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("hard-core overlap between particles {0} and {1}")]
    HardCoreOverlap(usize, usize),

    #[error("particle {0} lies outside the domain")]
    OutsideDomain(usize),

    #[error("size guard: {count} particles in one interaction neighbourhood (limit {limit})")]
    SizeGuard { count: usize, limit: usize },

    #[error("no phase transition at beta={beta} (critical value {beta_c})")]
    NoTransition { beta: f64, beta_c: f64 },

    #[error("root bracketing failed: {0}")]
    Bracketing(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("contour reaches the boundary frame at cube {0:?}")]
    ContourReachesBoundary(Vec<i64>),

    #[error("guard exceeded: {0}")]
    Guard(String),

    #[error("missing precomputation: {0}")]
    MissingTable(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Parse { .. } | Error::Constraint(_) => 2,
            Error::InsufficientStatistics(_) => 4,
            Error::Io { .. } => 1,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
