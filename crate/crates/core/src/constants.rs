//! Empirical estimation of the constants the bound consumes: the data
//! radius `C_d`, the fixed-point and output radii `C_out,T` and `C_out`, the
//! loss ceiling `C_ℓ`, and the contraction factor `L_x`, assembled into a
//! [`ConstantsReport`].
//!
//! All θ-sampled suprema are lower bounds of the true constants, so they are
//! inflated by [`SAFETY_FACTOR`]; the inflation is recorded in every report
//! through the reported values themselves. `C_d` is an exact maximum over
//! the data and is not inflated.
//!
//! Sampled parameter sets are drawn from per-index substreams
//! (`rng.derive(i)` for θ_i), which makes every estimate reproducible
//! bit-for-bit from `(spec, dataset, seed)` and independent of evaluation
//! order.

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use serde::{Deserialize, Serialize};

use crate::fixed_point::{solve, SolveConfig, SolveError};
use crate::losses::{loss_value, LossError, LossKind};
use crate::numerics::{norm2, SeededRng};
use crate::operators::{
    certify, contraction_factor, sample_params, CertifyOptions, FamilyKind, FinalLayer,
    OperatorError, OperatorSpec, ParamSet,
};

/// Declared inflation applied to θ-sampled suprema.
pub const SAFETY_FACTOR: f64 = 1.05;

/// Default number of sampled parameter sets.
pub const DEFAULT_N_THETA: usize = 100;

/// Every constant the generalization bound needs, plus the provenance
/// (family, dimensions, seed, sample count) required to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub family: FamilyKind,
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Exact maximum input norm over the dataset.
    pub c_d: f64,
    /// Inflated maximum output norm `max ‖P_φ(x*)‖`.
    pub c_out: f64,
    /// Inflated maximum fixed-point norm `max ‖x*‖`.
    pub c_out_t: f64,
    /// Inflated maximum absolute loss.
    pub c_ell: f64,
    /// Maximum certified contraction factor over the sampled θ.
    pub l_x: f64,
    pub c_params_phi: f64,
    pub c_params_psi: f64,
    /// `√(c_params_phi² + c_params_psi²)`.
    pub c_params: f64,
    /// Lipschitz constant of the loss in its prediction argument.
    pub l_ell: f64,
    /// Largest admissible-step value seen across the sampled θ (MON and
    /// LGD); feeds the ψ-Lipschitz formulas downstream.
    pub alpha_max: Option<f64>,
    pub theta_samples: usize,
    pub seed: u64,
}

impl ConstantsReport {
    /// Checks the report invariants: nonnegativity, `l_x ∈ (0, 1)`, and
    /// consistency of `c_params` with its two factors.
    pub fn validate(&self) -> Result<(), ConstantsError> {
        let nonneg = [
            self.c_d,
            self.c_out,
            self.c_out_t,
            self.c_ell,
            self.c_params_phi,
            self.c_params_psi,
            self.c_params,
            self.l_ell,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(ConstantsError::InvalidReport { reason: "negative or non-finite constant" });
        }
        if !(self.l_x > 0.0 && self.l_x < 1.0) {
            return Err(ConstantsError::InvalidReport { reason: "l_x outside (0, 1)" });
        }
        let expect = (self.c_params_phi * self.c_params_phi
            + self.c_params_psi * self.c_params_psi)
            .sqrt();
        if (self.c_params - expect).abs() > 1e-12 * expect.max(1.0) {
            return Err(ConstantsError::InvalidReport {
                reason: "c_params inconsistent with its factors",
            });
        }
        Ok(())
    }

    /// Fixed CSV column order shared with the row encoder.
    pub fn csv_header() -> &'static str {
        "family,k,m,n,c_d,c_out_T,c_out,c_ell,l_x,c_params,l_ell,seed,n_theta"
    }

    pub fn csv_row(&self) -> String {
        alloc::format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.family,
            self.state_dim,
            self.input_dim,
            self.output_dim,
            self.c_d,
            self.c_out_t,
            self.c_out,
            self.c_ell,
            self.l_x,
            self.c_params,
            self.l_ell,
            self.seed,
            self.theta_samples,
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstantsError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset has {inputs} inputs but {targets} targets")]
    TargetCount { inputs: usize, targets: usize },
    #[error("need at least one theta sample")]
    ZeroThetaSamples,
    #[error("certification of theta {theta_index} failed: {source}")]
    CertifyFailure { theta_index: usize, source: OperatorError },
    #[error("solve failed at theta {theta_index}, sample {sample_index}: {source}")]
    SolveFailure { theta_index: usize, sample_index: usize, source: SolveError },
    #[error("loss failed at theta {theta_index}, sample {sample_index}: {source}")]
    LossFailure { theta_index: usize, sample_index: usize, source: LossError },
    #[error("invalid constants report: {reason}")]
    InvalidReport { reason: &'static str },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Exact maximum Euclidean norm over the dataset inputs.
pub fn estimate_c_d(inputs: &[Vec<f64>]) -> Result<f64, ConstantsError> {
    if inputs.is_empty() {
        return Err(ConstantsError::EmptyDataset);
    }
    Ok(inputs.iter().map(|d| norm2(d)).fold(0.0, f64::max))
}

struct SweepMaxima {
    c_out_t: f64,
    c_out: f64,
    c_ell: f64,
    l_x: f64,
    alpha_max: Option<f64>,
}

/// Shared θ × d sweep: samples θ_i from `rng.derive(i)`, certifies it,
/// solves every input, and tracks the running maxima. Targets are consulted
/// only when a loss is given.
fn theta_sweep(
    spec: &OperatorSpec,
    loss: Option<(LossKind, &[Vec<f64>])>,
    inputs: &[Vec<f64>],
    n_theta: usize,
    rng: &SeededRng,
) -> Result<SweepMaxima, ConstantsError> {
    if inputs.is_empty() {
        return Err(ConstantsError::EmptyDataset);
    }
    if n_theta == 0 {
        return Err(ConstantsError::ZeroThetaSamples);
    }
    if let Some((_, targets)) = loss {
        if targets.len() != inputs.len() {
            return Err(ConstantsError::TargetCount {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
    }
    spec.validate()?;

    let solve_cfg = SolveConfig::default();
    let mut maxima =
        SweepMaxima { c_out_t: 0.0, c_out: 0.0, c_ell: 0.0, l_x: 0.0, alpha_max: None };

    for theta_index in 0..n_theta {
        let mut sub = rng.derive(theta_index as u64);
        let params = sample_params(spec, &mut sub);
        let op = certify(spec, params, &CertifyOptions::default(), &mut sub)
            .map_err(|source| ConstantsError::CertifyFailure { theta_index, source })?;
        maxima.l_x = maxima.l_x.max(op.l_x());
        if let Some(alpha) = op.params().alpha {
            maxima.alpha_max = Some(maxima.alpha_max.map_or(alpha, |a: f64| a.max(alpha)));
        }

        for (sample_index, d) in inputs.iter().enumerate() {
            let result = solve(&op, d, &solve_cfg).map_err(|source| {
                ConstantsError::SolveFailure { theta_index, sample_index, source }
            })?;
            maxima.c_out_t = maxima.c_out_t.max(norm2(&result.x_star));
            let out = op.output(&result.x_star)?;
            maxima.c_out = maxima.c_out.max(norm2(&out));
            if let Some((kind, targets)) = loss {
                let value = loss_value(kind, &out, &targets[sample_index]).map_err(|source| {
                    ConstantsError::LossFailure { theta_index, sample_index, source }
                })?;
                maxima.c_ell = maxima.c_ell.max(value.abs());
            }
        }
    }
    Ok(maxima)
}

/// Sampled estimates of the output radii, inflated by the safety factor:
/// returns `(c_out, c_out_T)`.
pub fn estimate_c_out(
    spec: &OperatorSpec,
    inputs: &[Vec<f64>],
    n_theta: usize,
    rng: &SeededRng,
) -> Result<(f64, f64), ConstantsError> {
    let maxima = theta_sweep(spec, None, inputs, n_theta, rng)?;
    Ok((maxima.c_out * SAFETY_FACTOR, maxima.c_out_t * SAFETY_FACTOR))
}

/// Sampled estimate of the loss ceiling `C_ℓ`, inflated by the safety
/// factor.
pub fn estimate_c_ell(
    loss: LossKind,
    spec: &OperatorSpec,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    n_theta: usize,
    rng: &SeededRng,
) -> Result<f64, ConstantsError> {
    let maxima = theta_sweep(spec, Some((loss, targets)), inputs, n_theta, rng)?;
    Ok(maxima.c_ell * SAFETY_FACTOR)
}

/// Contraction factor of one parameter set; delegates to certification's
/// power iteration at the default budget.
pub fn estimate_l_x(
    spec: &OperatorSpec,
    params: ParamSet,
    rng: &mut SeededRng,
) -> Result<f64, ConstantsError> {
    Ok(contraction_factor(spec, params, &CertifyOptions::default(), rng)?)
}

/// Runs one fused θ × d sweep and assembles the full report. The per-block
/// unit-Frobenius normalization fixes `c_params_psi = √(#ψ blocks)` and
/// `c_params_phi = 1` for a linear final layer, `0` for identity.
pub fn estimate_constants(
    spec: &OperatorSpec,
    loss: LossKind,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    n_theta: usize,
    rng: &SeededRng,
) -> Result<ConstantsReport, ConstantsError> {
    let c_d = estimate_c_d(inputs)?;
    let maxima = theta_sweep(spec, Some((loss, targets)), inputs, n_theta, rng)?;

    let c_params_psi = (spec.family_kind().psi_block_count() as f64).sqrt();
    let c_params_phi = match spec.final_layer {
        FinalLayer::Identity => 0.0,
        FinalLayer::Linear => 1.0,
    };
    let c_params = (c_params_phi * c_params_phi + c_params_psi * c_params_psi).sqrt();

    let report = ConstantsReport {
        family: spec.family_kind(),
        state_dim: spec.state_dim,
        input_dim: spec.input_dim,
        output_dim: spec.output_dim,
        c_d,
        c_out: maxima.c_out * SAFETY_FACTOR,
        c_out_t: maxima.c_out_t * SAFETY_FACTOR,
        c_ell: maxima.c_ell * SAFETY_FACTOR,
        l_x: maxima.l_x,
        c_params_phi,
        c_params_psi,
        c_params,
        l_ell: loss.lipschitz_constant(),
        alpha_max: maxima.alpha_max,
        theta_samples: n_theta,
        seed: rng.seed(),
    };
    report.validate()?;
    Ok(report)
}
