//! Deterministic numerical kernels shared by every other module: dense
//! row-major matrices, a seedable splittable random source, spectral-norm
//! estimation by power iteration, and composite Gauss-Legendre quadrature
//! that tolerates an integrable log-singularity at zero.

mod matrix;
mod quadrature;
mod rng;
mod spectral;

pub use matrix::{diff_norm2, dot, norm1, norm2, DenseMatrix};
pub use quadrature::{integrate, Quadrature, QuadratureSpec};
pub use rng::SeededRng;
pub use spectral::{extreme_eigs_sym, power_method, sample_on_norm_sphere, POWER_EARLY_STOP};

use thiserror::Error;

/// Errors from the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix shape {rows}x{cols} disagrees with {len} entries")]
    EntryCount { rows: usize, cols: usize, len: usize },
    #[error("matrix dimensions must be nonzero (got {rows}x{cols})")]
    EmptyShape { rows: usize, cols: usize },
    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize, value: f64 },
    #[error("matrix contains non-finite entries")]
    NonFiniteMatrix,
    #[error("matrix must be square (got {rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("power iteration needs iters >= 1")]
    ZeroIterations,
    #[error("target norm must be positive and finite (got {0})")]
    BadTargetNorm(f64),
    #[error("quadrature interval must satisfy 0 <= lower < upper < inf (got [{lower}, {upper}])")]
    BadInterval { lower: f64, upper: f64 },
    #[error("quadrature needs panels >= 1 and a positive relative tolerance")]
    BadQuadratureSpec,
    #[error("integrand returned a non-finite value at r = {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("quadrature stalled at {panels} panels with error estimate {error_estimate}")]
    QuadratureStall { panels: usize, error_estimate: f64 },
}
