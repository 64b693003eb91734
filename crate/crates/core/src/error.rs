use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or out-of-range input parameters.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Values outside the mathematical domain (nonpositive returns, non-PSD covariance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A builder refused to materialize a structure above its size cap.
    #[error("size error: {what} needs {needed} nodes, cap is {cap}")]
    Size {
        what: String,
        needed: u128,
        cap: usize,
    },

    /// An operation was called on an object it does not apply to.
    #[error("usage error: {0}")]
    Usage(String),

    /// A requested target lies outside the attainable interval.
    #[error("range error: {what} = {value} outside attainable interval [{lo}, {hi}]")]
    Range {
        what: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("unbounded problem: {0}")]
    Unbounded(String),

    #[error("strategy error: {0}")]
    Strategy(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::Parameter(_) | Error::Domain(_) | Error::Size { .. } => 2,
            Error::Range { .. } | Error::Usage(_) => 2,
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}
