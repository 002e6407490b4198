use std::path::PathBuf;

/// Errors produced anywhere in the decomposition and placement pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("timestamps are not strictly increasing with uniform spacing: {0}")]
    Timestamps(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {need} snapshots, got {got}")]
    TooFewSnapshots { need: usize, got: usize },

    #[error("rank policy resolved to zero retained modes")]
    ZeroRank,

    #[error("mode library is empty")]
    EmptyLibrary,

    #[error("requested {requested} sensors but at most {max} can be placed")]
    TooManySensors { requested: usize, max: usize },

    #[error("underdetermined reconstruction: {sensors} sensors for {columns} library columns")]
    Underdetermined { sensors: usize, columns: usize },

    #[error("enumeration bound exceeded: {0}")]
    EnumerationBound(String),

    #[error("{0} is unavailable: {1}")]
    Unavailable(&'static str, String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable identifier, used in the CLI's error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Timestamps(_) => "timestamps",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::TooFewSnapshots { .. } => "too_few_snapshots",
            Error::ZeroRank => "zero_rank",
            Error::EmptyLibrary => "empty_library",
            Error::TooManySensors { .. } => "too_many_sensors",
            Error::Underdetermined { .. } => "underdetermined",
            Error::EnumerationBound(_) => "enumeration_bound",
            Error::Unavailable(..) => "unavailable",
            Error::Numerical(_) => "numerical",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
