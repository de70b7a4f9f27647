use std::path::PathBuf;

/// Everything that can go wrong between reading an edge list and writing a
/// metrics report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad user data: empty edge lists, unknown nodes, malformed rows.
    #[error("input error: {0}")]
    Input(String),

    /// A malformed row in a delimited file.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Invalid or contradictory configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Several configuration problems reported together.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    ConfigList(Vec<String>),

    /// A structural invariant on a value was broken (e.g. an asymmetric
    /// adjacency matrix).
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN or infinity where a finite value is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Two artifacts that must agree do not (cache vs graph, state vs
    /// parameter, checkpoint vs config).
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension { op, left, right }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
