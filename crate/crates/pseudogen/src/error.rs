use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation before any numerics ran.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Quadrature-based normalization is only available in one or two dimensions.
    #[error("quadrature unsupported for dimension {dim}, use the sampling path instead")]
    QuadratureUnsupported { dim: usize },

    /// A force or drift evaluation produced a non-finite value.
    #[error("non-finite {what} at q = {position:?}")]
    NonFinite { what: &'static str, position: Vec<f64> },

    /// A matrix that must be symmetric positive definite failed its Cholesky test.
    #[error("matrix `{name}` is not symmetric positive definite")]
    NotSpd { name: &'static str },

    /// A coordinate transform or friction field degenerated at a point.
    #[error("degenerate geometry: {0}")]
    Geometry(String),

    /// An eigensolver did not converge or its input was rejected.
    #[error("eigensolver failure on {kind} matrix (lag {lag}): {detail}")]
    Eigen { kind: String, lag: f64, detail: String },

    /// Sampled data was insufficient for the requested estimate.
    #[error("estimation failure: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
