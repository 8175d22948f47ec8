use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A single input value failed validation.
    #[error("{field} {message}")]
    Validation { field: String, message: String },

    /// A dataset row failed to parse or validate. Rows are numbered from 1,
    /// not counting the header.
    #[error("{message}, row {row}")]
    Row { row: usize, message: String },

    #[error("no records")]
    Empty,

    #[error("unknown field `{0}`")]
    UnknownField(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    /// The design matrix does not determine every parameter; the payload
    /// names the factors that are constant or collinear.
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error(
        "simplex did not converge after {evaluations} evaluations \
         (best residual sum of squares {residual:e}, params {best:?})"
    )]
    NotConverged {
        evaluations: usize,
        residual: f64,
        best: [f64; 4],
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
