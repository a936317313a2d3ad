use num_complex::Complex64;

/// Errors raised by the solver library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("argument {z} outside the supported domain of {func}")]
    Domain { func: &'static str, z: Complex64 },

    #[error("coincident points passed to a singular kernel")]
    CoincidentPoints,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is numerically singular near omega = {omega} (smallest pivot {pivot:.3e})")]
    NearResonance { omega: Complex64, pivot: f64 },

    #[error("iteration failed to converge: {0}")]
    NoConvergence(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
