//! Dense numerics, seeded random streams and distribution samplers.

mod linalg;
mod rng;
mod sampling;

pub use linalg::{cholesky_solve, leading_eigenpair, Cholesky, DenseMatrix, DenseVector};
pub(crate) use linalg::{blocked_sum, dot};
pub use rng::SeededRng;
pub use sampling::{
    ar1_covariance, sample_bernoulli, sample_mvn_ar1, sample_poisson, sample_standard_normal,
    sample_uniform01, standard_normal, Ar1Normal,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("power iteration did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("non-finite entry")]
    NonFinite,
    #[error("empty dimension")]
    EmptyDimension,
}
