//! Banach iteration for the state equation `x* = T_psi(x*; d)` and the
//! parameter-perturbation check that the stability lemma rests on.
//!
//! Certification guarantees `L_x < 1`, so the iteration from `x_0 = 0`
//! converges geometrically: update norms satisfy
//! `‖x_{k+1} − x_k‖ ≤ L_x ‖x_k − x_{k-1}‖`, and after `K` steps the iterate
//! is within `L_x^K / (1 − L_x) · ‖x_1 − x_0‖` of the fixed point.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::operators::{CertifiedParams, OperatorError};

/// Stopping rule for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Iteration stops once `‖x_{k+1} − x_k‖ ≤ tolerance`.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iters: 10_000 }
    }
}

impl SolveConfig {
    fn validate(&self) -> Result<(), SolveError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) || self.max_iters == 0 {
            return Err(SolveError::BadConfig {
                tolerance: self.tolerance,
                max_iters: self.max_iters,
            });
        }
        Ok(())
    }
}

/// A converged fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub x_star: Vec<f64>,
    /// Operator applications performed.
    pub iterations: usize,
    /// `‖x_K − x_{K-1}‖` at the accepted iterate.
    pub update_norm: f64,
    /// Contraction-mapping error bound `L_x^K / (1 − L_x) · ‖x_1 − x_0‖`
    /// on `‖x_K − x*‖`, from the certificate's contraction factor.
    pub a_priori_bound: f64,
}

/// Outcome of comparing fixed points of two operators against the
/// perturbation bound `‖x*_1 − x*_2‖ ≤ L_psi / (1 − L_x) · ‖psi_1 − psi_2‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationCheck {
    /// Measured fixed-point distance.
    pub lhs: f64,
    /// `lipschitz * psi_distance`.
    pub rhs: f64,
    /// `L_psi / (1 − max(L_x,1, L_x,2))`.
    pub lipschitz: f64,
    pub psi_distance: f64,
    /// Solver tolerance both fixed points were resolved to.
    pub solver_tolerance: f64,
}

impl PerturbationCheck {
    /// The bound holds up to twice the solver tolerance, the worst-case
    /// resolution error of the two computed fixed points.
    pub fn passes(&self) -> bool {
        self.lhs <= self.rhs + 2.0 * self.solver_tolerance
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("solver config needs tolerance > 0 and max_iters > 0 (got {tolerance}, {max_iters})")]
    BadConfig { tolerance: f64, max_iters: usize },
    #[error("no convergence after {iterations} iterations (last update norm {update_norm})")]
    NonConvergence { iterations: usize, update_norm: f64, last_iterate: Vec<f64> },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Runs the Banach iteration from `x_0 = 0` until the update norm drops to
/// the tolerance.
pub fn solve(
    op: &CertifiedParams,
    d: &[f64],
    cfg: &SolveConfig,
) -> Result<FixedPointResult, SolveError> {
    cfg.validate()?;
    let shift = op.input_shift(d)?;
    let k = op.spec().state_dim;
    let l_x = op.l_x();

    let mut current = alloc::vec![0.0; k];
    let mut next = alloc::vec![0.0; k];
    let mut first_update = 0.0;
    let mut update = f64::INFINITY;

    for it in 1..=cfg.max_iters {
        op.step_with_shift(&current, &shift, &mut next);
        update = crate::numerics::diff_norm2(&next, &current);
        core::mem::swap(&mut current, &mut next);
        if it == 1 {
            first_update = update;
        }
        if update <= cfg.tolerance {
            let a_priori_bound = l_x.powi(it as i32) / (1.0 - l_x) * first_update;
            return Ok(FixedPointResult {
                x_star: current,
                iterations: it,
                update_norm: update,
                a_priori_bound,
            });
        }
    }

    Err(SolveError::NonConvergence {
        iterations: cfg.max_iters,
        update_norm: update,
        last_iterate: current,
    })
}

/// Solves both operators on the same input and compares the fixed-point
/// distance against the perturbation bound. `l_psi` is the Lipschitz
/// constant of `psi ↦ T_psi(x; d)` over the states and inputs under test;
/// the bound arithmetic that produces it lives downstream, so it is passed
/// in explicitly.
pub fn perturbation_check(
    a: &CertifiedParams,
    b: &CertifiedParams,
    l_psi: f64,
    d: &[f64],
    cfg: &SolveConfig,
) -> Result<PerturbationCheck, SolveError> {
    let psi_distance = a.params().psi_distance(b.params())?;
    let xa = solve(a, d, cfg)?;
    let xb = solve(b, d, cfg)?;
    let lhs = crate::numerics::diff_norm2(&xa.x_star, &xb.x_star);
    let l_x = a.l_x().max(b.l_x());
    let lipschitz = l_psi / (1.0 - l_x);
    Ok(PerturbationCheck {
        lhs,
        rhs: lipschitz * psi_distance,
        lipschitz,
        psi_distance,
        solver_tolerance: cfg.tolerance,
    })
}
