use thiserror::Error;

/// Errors raised by lattice construction, the steady-state solvers and the
/// post-processing routines.
#[derive(Debug, Error)]
pub enum NessError {
    #[error("site ({x}, {y}) is outside the {lx}x{ly} lattice")]
    IndexOutOfRange { x: usize, y: usize, lx: usize, ly: usize },

    #[error("flat index {index} is outside [0, {dim})")]
    FlatIndexOutOfRange { index: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    Validation(String),

    #[error("unsupported configuration: {0}")]
    Configuration(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("bosonic occupation diverges at omega - mu = {gap:e}")]
    BosonicDivergence { gap: f64 },

    #[error("resolvent is singular at omega = {omega} (distance {distance:e} to a real pole)")]
    Singular { omega: f64, distance: f64 },

    #[error("eigendecomposition failed: {reason} (eigenvector condition number {condition:e})")]
    Eigendecomposition { reason: String, condition: f64 },

    #[error("linear algebra backend failure: {0}")]
    LinearAlgebra(String),

    #[error("quadrature did not converge: estimated error {estimate:e} exceeds tolerance {tolerance:e}")]
    Integration { estimate: f64, tolerance: f64 },

    #[error("Berry curvature is singular at k = ({kx}, {ky}): the band gap closes")]
    GapClosing { kx: f64, ky: f64 },

    #[error("Chern sum deviates from an integer by {deviation} (raw value {raw})")]
    ChernNonConvergence { raw: f64, deviation: f64 },
}

impl From<ndarray_linalg::error::LinalgError> for NessError {
    fn from(err: ndarray_linalg::error::LinalgError) -> Self {
        NessError::LinearAlgebra(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, NessError>;
