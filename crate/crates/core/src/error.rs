use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("curve rejected: {0}")]
    NonConvex(String),

    #[error("unreliable density: {0}")]
    UnreliableDensity(String),

    #[error("boundary decay check failed: {0}")]
    BoundaryDecay(String),

    #[error("no solution in bracket [{lo}, {hi}]: residuals {f_lo:.6e} and {f_hi:.6e} share a sign")]
    NoSolution {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
