use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A graph, trajectory or matrix does not have the shape an operation needs.
    #[error("structural error: {0}")]
    Structure(String),

    /// A noise parameter or bound is outside its admissible domain.
    #[error("parameter domain error: {0}")]
    Domain(String),

    /// Cholesky factorization hit a non-positive pivot.
    #[error("linear system is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
