use thiserror::Error;

/// Errors produced by the modelling and optimization routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The covariance left after deflation carries no further direction.
    #[error("rank exhausted: no covariance left to extract a latent variable")]
    RankExhausted,

    #[error("ill-conditioned system (condition estimate {0:.3e})")]
    IllConditioned(f64),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("zero-variance column `{0}`")]
    ZeroVariance(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("{skipped} of {total} kernel-flow iterations were degenerate; last cause: {cause}")]
    TooManySkipped {
        skipped: usize,
        total: usize,
        cause: String,
    },

    #[error("model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
