use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the pipeline.
///
/// Every variant maps onto one of the process exit codes used by the
/// command-line front end (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: unparseable date `{value}`")]
    Date { line: u64, value: String },

    #[error("duplicate record for subject {subject} at visit {visit}")]
    DuplicateRecord { subject: String, visit: String },

    #[error("cohort is empty after cleaning")]
    DegenerateCohort,

    #[error("subject {subject}: {message}")]
    Assembly { subject: String, message: String },

    #[error("zero baseline value, relative change undefined")]
    ZeroBaseline,

    #[error("follow-up must come strictly after baseline (dt = {0} days)")]
    NonPositiveInterval(f64),

    #[error("covariance is not positive definite: {0}")]
    Covariance(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite objective at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("target column {task} is constant, normalisation undefined")]
    UndefinedNormalization { task: usize },

    #[error("column {task} is constant, correlation undefined")]
    UndefinedCorrelation { task: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("replayed outputs differ from the manifest: {}", .0.join(", "))]
    ReplayMismatch(Vec<String>),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage/config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingColumn(_) | Error::Config(_) | Error::Json(_) => 2,
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Parse { .. }
            | Error::Date { .. }
            | Error::DuplicateRecord { .. }
            | Error::DegenerateCohort
            | Error::Assembly { .. }
            | Error::Dimension(_)
            | Error::InsufficientData(_)
            | Error::UndefinedNormalization { .. }
            | Error::UndefinedCorrelation { .. }
            | Error::ZeroBaseline
            | Error::NonPositiveInterval(_)
            | Error::ReplayMismatch(_) => 3,
            Error::Covariance(_) | Error::Singular(_) | Error::Divergence { .. } => 4,
        }
    }
}
