use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are split so the CLI can map them onto exit codes: input and
/// contract violations are validation errors, the rest are numerical.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: field `{field}`: {message}")]
    Schema {
        path: PathBuf,
        line: u64,
        field: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("amp events reference unknown update ids: {0:?}")]
    UnresolvedUpdates(Vec<String>),

    #[error("duplicate update id `{0}`")]
    DuplicateUpdate(String),

    #[error("event on site `{site}` by `{actor}` has no timestamp")]
    MissingTimestamp { actor: String, site: String },

    #[error("cursor cannot move backwards: requested {requested}, current {current}")]
    CursorRegression { requested: i64, current: i64 },

    #[error("largest component share is undefined with zero activated nodes")]
    NoActivatedNodes,

    #[error("invalid edge: {0}")]
    InvalidEdge(String),

    #[error("unknown author id {0}")]
    UnknownAuthor(u32),

    #[error("role is undefined for an author with zero labeled updates")]
    UndefinedRole,

    #[error("cohen's kappa undefined: {0}")]
    DegenerateMarginals(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("feature `{0}` is constant across alternatives in every instance")]
    Unidentified(String),

    #[error("singular information matrix (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("rank-deficient design; dependent columns: {0:?}")]
    RankDeficient(Vec<String>),

    #[error("perfect separation: standardized coefficient norm {norm:.2} exceeded 30")]
    Separation { norm: f64 },

    #[error("models are not nested: {0}")]
    NotNested(String),

    #[error("ill-conditioned confusion matrix (condition number {0:.3e})")]
    IllConditioned(f64),
}

impl Error {
    /// True for failures that come from the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::RankDeficient(_)
                | Error::Separation { .. }
                | Error::IllConditioned(_)
                | Error::Unidentified(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
