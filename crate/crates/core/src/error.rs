use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Each variant carries a stable kebab-case code (see [`Error::code`]) that the
/// CLI prints and that tests match on.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty-dataset: {0}")]
    EmptyDataset(String),
    #[error("shape-mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid-label: {0}")]
    InvalidLabel(String),
    #[error("sigma-not-pd: {0}")]
    SigmaNotPd(String),
    #[error("invalid-prior: {0}")]
    InvalidPrior(String),
    #[error("invalid-noise-level: p = {0} is outside [0, 1/2]")]
    InvalidNoiseLevel(f64),
    #[error("singular-moments: {0}")]
    SingularMoments(String),
    #[error("diverged: {0}")]
    Diverged(String),
    #[error("invalid-lambda: {0}")]
    InvalidLambda(f64),
    #[error("invalid-config: {0}")]
    InvalidConfig(String),
    #[error("empty-group: {0}")]
    EmptyGroup(String),
    #[error("empty-error-set: identification model made no mistakes")]
    EmptyErrorSet,
    #[error("assumption-violated: {0}")]
    AssumptionViolated(String),
    #[error("too-small: {0}")]
    TooSmall(String),
    #[error("tuning-failed: every grid point failed for {0}")]
    TuningFailed(String),
    #[error("nothing-to-run: the method list is empty")]
    NothingToRun,
    #[error("schema-mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyDataset(_) => "empty-dataset",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::InvalidLabel(_) => "invalid-label",
            Error::SigmaNotPd(_) => "sigma-not-pd",
            Error::InvalidPrior(_) => "invalid-prior",
            Error::InvalidNoiseLevel(_) => "invalid-noise-level",
            Error::SingularMoments(_) => "singular-moments",
            Error::Diverged(_) => "diverged",
            Error::InvalidLambda(_) => "invalid-lambda",
            Error::InvalidConfig(_) => "invalid-config",
            Error::EmptyGroup(_) => "empty-group",
            Error::EmptyErrorSet => "empty-error-set",
            Error::AssumptionViolated(_) => "assumption-violated",
            Error::TooSmall(_) => "too-small",
            Error::TuningFailed(_) => "tuning-failed",
            Error::NothingToRun => "nothing-to-run",
            Error::SchemaMismatch(_) => "schema-mismatch",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code: 2 for data/config problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SingularMoments(_)
            | Error::Diverged(_)
            | Error::SigmaNotPd(_)
            | Error::AssumptionViolated(_)
            | Error::TuningFailed(_) => 3,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
