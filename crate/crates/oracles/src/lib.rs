//! Independent reference implementations used to cross-check the main
//! crates. Everything here deliberately avoids the primary code paths: the
//! eigensolver is a cyclic Jacobi sweep instead of power iteration, the
//! integrator is a log-substituted trapezoid rule instead of Gauss-Legendre,
//! and the covering counter is a literal greedy construction. Keep it that
//! way: an oracle that shares machinery with the code under test certifies
//! nothing.

mod covering;
mod jacobi;
mod quadrature;

pub use covering::greedy_cover_count;
pub use jacobi::{jacobi_eigenvalues, spectral_norm_jacobi};
pub use quadrature::trapezoid_log_integral;
