//! The analytic half of the certification: Lipschitz constants of the
//! fixed-point map in its parameters, the parameter-to-prediction chain,
//! covering-number and Rademacher-complexity bounds, and the final
//! generalization bound
//!
//! `L ≤ L̂_emp + 8 L_ℓ C_out √((p/N) log(e(1 + 4 L̂ C_params/(√N C_out))))
//!        + 4 C_ℓ √(2 log(4/δ)/N)`.
//!
//! Products that can overflow for large parameter counts are evaluated in
//! log-space; the middle term is computed from its printed closed form so
//! reports stay bit-stable, with the Dudley-integral route retained as a
//! numeric cross-check that must stay below it.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use serde::{Deserialize, Serialize};

use crate::constants::ConstantsReport;
use crate::numerics::{integrate, NumericsError, QuadratureSpec};
use crate::operators::FamilyKind;

/// The Lipschitz bookkeeping from parameters to predictions: `l` bounds the
/// parameter-to-fixed-point map, `l_hat` the parameter-to-prediction map
/// through the final layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzChain {
    pub l_psi: f64,
    pub l_x: f64,
    /// `l_psi / (1 − l_x)`.
    pub l: f64,
    /// Lipschitz constant of the final layer in the state argument.
    pub l_p_x: f64,
    /// Lipschitz constant of the final layer in its own parameters.
    pub l_p_phi: f64,
    /// `√((l_p_x·l)² + l_p_phi²)`; equals `l` exactly for the identity
    /// final layer.
    pub l_hat: f64,
}

/// Final-layer contribution to the chain. The linear case uses
/// `(L_P,x, L_P,φ) = (c_params_phi, c_out_t)`: the map `x ↦ φx` is
/// `‖φ‖`-Lipschitz in `x` and `‖x‖`-Lipschitz in `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainFinal {
    Identity,
    Linear { c_params_phi: f64, c_out_t: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundError {
    #[error("{name} must be nonnegative (got {value})")]
    NegativeInput { name: &'static str, value: f64 },
    #[error("covering radius must be positive (got {0})")]
    BadRadius(f64),
    #[error("contraction factor must lie in [0, 1) (got {0})")]
    ContractionRange(f64),
    #[error("delta must lie in (0, 1) (got {0})")]
    BadDelta(f64),
    #[error("{name} must be at least 1")]
    ZeroCount { name: &'static str },
    #[error("family {0} needs a recorded step size to build its chain")]
    MissingAlpha(FamilyKind),
    #[error(transparent)]
    Quadrature(#[from] NumericsError),
}

fn check_nonneg(name: &'static str, value: f64) -> Result<f64, BoundError> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(BoundError::NegativeInput { name, value });
    }
    Ok(value)
}

/// ψ-Lipschitz constant of the contractive layer over states of norm at
/// most `c_out_t` and inputs of norm at most `c_d`: `√(c_out_t² + c_d² + 1)`.
pub fn l_psi_contractive(c_out_t: f64, c_d: f64) -> Result<f64, BoundError> {
    check_nonneg("c_out_t", c_out_t)?;
    check_nonneg("c_d", c_d)?;
    Ok((c_out_t * c_out_t + c_d * c_d + 1.0).sqrt())
}

/// ψ-Lipschitz constant of the MON step:
/// `α √(4 (c_params² + 1) c_out_t² + c_d² + 1)`, with `c_params` bounding
/// the stacked block norm of ψ.
pub fn l_psi_mon(alpha: f64, c_params: f64, c_out_t: f64, c_d: f64) -> Result<f64, BoundError> {
    check_nonneg("alpha", alpha)?;
    check_nonneg("c_params", c_params)?;
    check_nonneg("c_out_t", c_out_t)?;
    check_nonneg("c_d", c_d)?;
    Ok(alpha
        * (4.0 * (c_params * c_params + 1.0) * c_out_t * c_out_t + c_d * c_d + 1.0).sqrt())
}

/// ψ-Lipschitz constant of the LGD step: `2 α c_out_t c_params_psi`.
pub fn l_psi_lgd(alpha: f64, c_out_t: f64, c_params_psi: f64) -> Result<f64, BoundError> {
    check_nonneg("alpha", alpha)?;
    check_nonneg("c_out_t", c_out_t)?;
    check_nonneg("c_params_psi", c_params_psi)?;
    Ok(2.0 * alpha * c_out_t * c_params_psi)
}

/// Assembles the parameter-to-prediction Lipschitz chain. The fixed-point
/// map is `l_psi/(1−l_x)`-Lipschitz in ψ; composing with the final layer
/// gives `l_hat`, which collapses to `l` exactly for the identity layer.
pub fn chain(l_psi: f64, l_x: f64, final_layer: ChainFinal) -> Result<LipschitzChain, BoundError> {
    check_nonneg("l_psi", l_psi)?;
    check_nonneg("l_x", l_x)?;
    if l_x >= 1.0 {
        return Err(BoundError::ContractionRange(l_x));
    }
    let l = l_psi / (1.0 - l_x);
    let (l_p_x, l_p_phi, l_hat) = match final_layer {
        ChainFinal::Identity => (1.0, 0.0, l),
        ChainFinal::Linear { c_params_phi, c_out_t } => {
            check_nonneg("c_params_phi", c_params_phi)?;
            check_nonneg("c_out_t", c_out_t)?;
            let lx_part = c_params_phi * l;
            (c_params_phi, c_out_t, (lx_part * lx_part + c_out_t * c_out_t).sqrt())
        }
    };
    Ok(LipschitzChain { l_psi, l_x, l, l_p_x, l_p_phi, l_hat })
}

/// Builds the chain straight from a constants report: the family picks the
/// ψ-Lipschitz formula (fed by `c_params_psi`, the stacked ψ-block bound,
/// and the recorded step-size maximum for MON and LGD), and a nonzero
/// `c_params_phi` marks a linear final layer.
pub fn chain_from_constants(report: &ConstantsReport) -> Result<LipschitzChain, BoundError> {
    let l_psi = match report.family {
        FamilyKind::Contractive => l_psi_contractive(report.c_out_t, report.c_d)?,
        FamilyKind::Mon => {
            let alpha = report.alpha_max.ok_or(BoundError::MissingAlpha(report.family))?;
            l_psi_mon(alpha, report.c_params_psi, report.c_out_t, report.c_d)?
        }
        FamilyKind::Lgd => {
            let alpha = report.alpha_max.ok_or(BoundError::MissingAlpha(report.family))?;
            l_psi_lgd(alpha, report.c_out_t, report.c_params_psi)?
        }
    };
    let final_layer = if report.c_params_phi > 0.0 {
        ChainFinal::Linear { c_params_phi: report.c_params_phi, c_out_t: report.c_out_t }
    } else {
        ChainFinal::Identity
    };
    chain(l_psi, report.l_x, final_layer)
}

/// `log 𝒩 ≤ p·ln(1 + 2·l_hat·c_params/r)`, the covering exponent in
/// log-space.
pub fn covering_log(r: f64, l_hat: f64, c_params: f64, p: u64) -> Result<f64, BoundError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(BoundError::BadRadius(r));
    }
    check_nonneg("l_hat", l_hat)?;
    check_nonneg("c_params", c_params)?;
    if p == 0 {
        return Err(BoundError::ZeroCount { name: "p" });
    }
    Ok(p as f64 * (2.0 * l_hat * c_params / r).ln_1p())
}

/// Covering-number bound `(1 + 2·l_hat·c_params/r)^p`. Evaluated as
/// `exp(covering_log)`; the result saturates to infinity once `p` is large
/// enough to overflow, so quantitative work uses [`covering_log`].
pub fn covering_bound(r: f64, l_hat: f64, c_params: f64, p: u64) -> Result<f64, BoundError> {
    Ok(covering_log(r, l_hat, c_params, p)?.exp())
}

/// Closed-form Rademacher bound
/// `4 l_ell c_out √((p/N)·(1 + ln(1 + 4·l_hat·c_params/(√N·c_out))))`;
/// the middle Theorem term is exactly twice this value. A zero `c_out`
/// collapses the prediction set to a point, so the bound is 0.
pub fn rademacher_closed(
    l_ell: f64,
    c_out: f64,
    l_hat: f64,
    c_params: f64,
    p: u64,
    n: u64,
) -> Result<f64, BoundError> {
    check_nonneg("l_ell", l_ell)?;
    check_nonneg("c_out", c_out)?;
    check_nonneg("l_hat", l_hat)?;
    check_nonneg("c_params", c_params)?;
    if p == 0 {
        return Err(BoundError::ZeroCount { name: "p" });
    }
    if n == 0 {
        return Err(BoundError::ZeroCount { name: "N" });
    }
    if c_out == 0.0 {
        return Ok(0.0);
    }
    let n_f = n as f64;
    // log(e·(1+x)) = 1 + ln(1+x), kept in ln_1p form for small x.
    let log_term = 1.0 + (4.0 * l_hat * c_params / (n_f.sqrt() * c_out)).ln_1p();
    Ok(4.0 * l_ell * c_out * (p as f64 / n_f * log_term).sqrt())
}

/// Dudley-integral form of the Rademacher bound:
/// `(8 l_ell / N) ∫₀^{√N·c_out/2} √(log 𝒩(r)) dr` with the covering
/// exponent of [`covering_log`]. The given quadrature spec contributes the
/// panel count and tolerance; the interval and the integrable singularity
/// at zero are fixed by the formula. Always at most [`rademacher_closed`]
/// on the same inputs.
pub fn rademacher_integral(
    l_ell: f64,
    c_out: f64,
    l_hat: f64,
    c_params: f64,
    p: u64,
    n: u64,
    quad: &QuadratureSpec,
) -> Result<f64, BoundError> {
    check_nonneg("l_ell", l_ell)?;
    check_nonneg("c_out", c_out)?;
    check_nonneg("l_hat", l_hat)?;
    check_nonneg("c_params", c_params)?;
    if p == 0 {
        return Err(BoundError::ZeroCount { name: "p" });
    }
    if n == 0 {
        return Err(BoundError::ZeroCount { name: "N" });
    }
    let n_f = n as f64;
    let upper = n_f.sqrt() * c_out / 2.0;
    let scale = 2.0 * l_hat * c_params;
    if upper == 0.0 || scale == 0.0 || l_ell == 0.0 {
        return Ok(0.0);
    }
    let spec = QuadratureSpec::new(0.0, upper)
        .with_singularity_at_zero()
        .with_panels(quad.panels)
        .with_rel_tol(quad.rel_tol);
    let p_f = p as f64;
    let result = integrate(|r| (p_f * (scale / r).ln_1p()).sqrt(), &spec)?;
    Ok(8.0 * l_ell / n_f * result.value)
}

/// The evaluated bound: both excess-risk terms and the inputs they came
/// from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n_samples: u64,
    pub param_count: u64,
    pub delta: f64,
    /// `8 L_ℓ C_out √((p/N) log(e(1 + 4 L̂ C_params/(√N C_out))))`.
    pub term_rademacher: f64,
    /// `4 C_ℓ √(2 log(4/δ)/N)`.
    pub term_confidence: f64,
    /// Sum of the two terms: the certified gap between population and
    /// empirical loss, holding with probability `1 − δ`.
    pub total_excess: f64,
    pub constants: ConstantsReport,
    pub chain: LipschitzChain,
}

impl BoundReport {
    pub fn csv_header() -> &'static str {
        "N,p,delta,term_rademacher,term_confidence,total_excess"
    }

    pub fn csv_row(&self) -> alloc::string::String {
        alloc::format!(
            "{},{},{},{},{},{}",
            self.n_samples,
            self.param_count,
            self.delta,
            self.term_rademacher,
            self.term_confidence,
            self.total_excess,
        )
    }
}

/// Evaluates the generalization bound for `N` samples, `p` parameters, and
/// confidence `1 − δ`.
pub fn generalization_bound(
    constants: &ConstantsReport,
    chain: &LipschitzChain,
    p: u64,
    n: u64,
    delta: f64,
) -> Result<BoundReport, BoundError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundError::BadDelta(delta));
    }
    if n == 0 {
        return Err(BoundError::ZeroCount { name: "N" });
    }
    check_nonneg("c_ell", constants.c_ell)?;
    let term_rademacher = 2.0
        * rademacher_closed(
            constants.l_ell,
            constants.c_out,
            chain.l_hat,
            constants.c_params,
            p,
            n,
        )?;
    let term_confidence = 4.0 * constants.c_ell * (2.0 * (4.0 / delta).ln() / n as f64).sqrt();
    Ok(BoundReport {
        n_samples: n,
        param_count: p,
        delta,
        term_rademacher,
        term_confidence,
        total_excess: term_rademacher + term_confidence,
        constants: constants.clone(),
        chain: *chain,
    })
}

#[cfg(test)]
mod tests {
    use alloc::vec::Vec;

    use super::*;
    use crate::numerics::SeededRng;

    /// Hand-built report with the exact constants the formulas should see.
    fn report(l_ell: f64, c_out: f64, c_params: f64, c_ell: f64) -> ConstantsReport {
        ConstantsReport {
            family: FamilyKind::Contractive,
            state_dim: 1,
            input_dim: 1,
            output_dim: 1,
            c_d: 1.0,
            c_out,
            c_out_t: c_out,
            c_ell,
            l_x: 0.5,
            c_params_phi: 0.0,
            c_params_psi: c_params,
            c_params,
            l_ell,
            alpha_max: None,
            theta_samples: 1,
            seed: 0,
        }
    }

    #[test]
    fn psi_lipschitz_formulas_match_hand_values() {
        assert_eq!(l_psi_contractive(0.0, 0.0).unwrap(), 1.0);
        assert!((l_psi_contractive(1.0, 1.0).unwrap() - 3.0f64.sqrt()).abs() < 1e-15);

        assert_eq!(l_psi_mon(0.0, 2.0, 1.0, 1.0).unwrap(), 0.0);
        // 0.1·√22, reference from 50-digit arithmetic.
        let got = l_psi_mon(0.1, 2.0, 1.0, 1.0).unwrap();
        assert!((got - 0.469041575982342955456563).abs() < 1e-15);

        assert_eq!(l_psi_lgd(1.0, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(l_psi_lgd(0.3, 0.0, 5.0).unwrap(), 0.0);

        assert!(matches!(
            l_psi_contractive(-1.0, 0.0),
            Err(BoundError::NegativeInput { name: "c_out_t", .. })
        ));
        assert!(matches!(
            l_psi_mon(-0.1, 1.0, 1.0, 1.0),
            Err(BoundError::NegativeInput { name: "alpha", .. })
        ));
    }

    #[test]
    fn chain_identity_collapses_exactly() {
        let c = chain(1.0, 0.5, ChainFinal::Identity).unwrap();
        assert_eq!(c.l, 2.0);
        assert_eq!(c.l_hat, c.l);
        assert_eq!((c.l_p_x, c.l_p_phi), (1.0, 0.0));
    }

    #[test]
    fn chain_linear_matches_hand_value() {
        // l = 1/(1-0.5) = 2; l_hat = sqrt((1·2)² + 1²) = √5.
        let c = chain(
            1.0,
            0.5,
            ChainFinal::Linear { c_params_phi: 1.0, c_out_t: 1.0 },
        )
        .unwrap();
        assert!((c.l_hat - 2.236067977499789696409174).abs() < 1e-15);

        // psi-independent operator: l = 0, l_hat reduces to l_p_phi.
        let c = chain(0.0, 0.9, ChainFinal::Linear { c_params_phi: 0.7, c_out_t: 1.3 }).unwrap();
        assert_eq!(c.l, 0.0);
        assert_eq!(c.l_hat, 1.3);
    }

    #[test]
    fn chain_rejects_bad_contraction_factors() {
        assert!(matches!(
            chain(1.0, 1.0, ChainFinal::Identity),
            Err(BoundError::ContractionRange(_))
        ));
        assert!(matches!(
            chain(1.0, 1.5, ChainFinal::Identity),
            Err(BoundError::ContractionRange(_))
        ));
        assert!(matches!(
            chain(1.0, -0.1, ChainFinal::Identity),
            Err(BoundError::NegativeInput { .. })
        ));
    }

    #[test]
    fn covering_bound_hand_values() {
        // Degenerate product: one point covers the whole set.
        for r in [0.05, 0.5, 2.0] {
            assert_eq!(covering_bound(r, 0.0, 3.0, 7).unwrap(), 1.0);
            assert_eq!(covering_bound(r, 3.0, 0.0, 7).unwrap(), 1.0);
        }
        let nine = covering_bound(1.0, 1.0, 1.0, 2).unwrap();
        assert!((nine - 9.0).abs() < 1e-12);
        assert!(matches!(covering_bound(0.0, 1.0, 1.0, 1), Err(BoundError::BadRadius(_))));
        assert!(matches!(covering_bound(-0.5, 1.0, 1.0, 1), Err(BoundError::BadRadius(_))));
        assert!(matches!(
            covering_bound(1.0, 1.0, 1.0, 0),
            Err(BoundError::ZeroCount { name: "p" })
        ));
    }

    #[test]
    fn covering_log_survives_extreme_parameter_counts() {
        // p = 10^5 overflows the plain power but not the log form.
        let log = covering_log(0.05, 2.0, 2.0, 100_000).unwrap();
        assert!(log.is_finite() && log > 0.0);
        assert_eq!(covering_bound(0.05, 2.0, 2.0, 100_000).unwrap(), f64::INFINITY);
    }

    #[test]
    fn covering_is_monotone() {
        let base = covering_log(0.5, 1.5, 2.0, 10).unwrap();
        assert!(covering_log(0.25, 1.5, 2.0, 10).unwrap() > base);
        assert!(covering_log(1.0, 1.5, 2.0, 10).unwrap() < base);
        assert!(covering_log(0.5, 1.5, 2.0, 20).unwrap() > base);
        assert!(covering_log(0.5, 3.0, 2.0, 10).unwrap() > base);
    }

    #[test]
    fn covering_dominates_greedy_interval_covers() {
        // p = 1: the image of the parameter ball under an l_hat-Lipschitz
        // map is inside an interval of radius l_hat·c_params; greedy covers
        // of a dense grid of it can never beat the bound.
        let l_hat = 1.3;
        let c_params = 0.9;
        let radius = l_hat * c_params;
        let points: Vec<Vec<f64>> = (0..=2000)
            .map(|i| alloc::vec![-radius + 2.0 * radius * (i as f64) / 2000.0])
            .collect();
        for r in [0.1, 0.3, 0.7, 1.5] {
            let count = deqcert_oracles::greedy_cover_count(&points, r) as f64;
            let bound = covering_bound(r, l_hat, c_params, 1).unwrap();
            assert!(count <= bound, "r={r}: {count} > {bound}");
        }
    }

    #[test]
    fn rademacher_closed_matches_frozen_reference() {
        // Reference from 50-digit arithmetic.
        let got = rademacher_closed(1.0, 1.0, 2.0, 2.0, 100, 10_000).unwrap();
        assert!((got - 0.4286574399435098157562475).abs() < 1e-15);
    }

    #[test]
    fn rademacher_closed_scales_as_sqrt_p() {
        let a = rademacher_closed(1.0, 1.5, 2.0, 2.0, 100, 10_000).unwrap();
        let b = rademacher_closed(1.0, 1.5, 2.0, 2.0, 400, 10_000).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rademacher_closed_degenerate_output_is_zero() {
        assert_eq!(rademacher_closed(1.0, 0.0, 2.0, 2.0, 100, 100).unwrap(), 0.0);
    }

    #[test]
    fn rademacher_integral_stays_below_closed_form() {
        let mut rng = SeededRng::new(1);
        let quad = QuadratureSpec::new(0.0, 1.0);
        for trial in 0..12 {
            let l_ell = rng.uniform_in(0.5, 2.0);
            let c_out = rng.uniform_in(0.1, 3.0);
            let l_hat = rng.uniform_in(0.5, 5.0);
            let c_params = rng.uniform_in(0.5, 4.0);
            let p = 1 + rng.index(200) as u64;
            let n = 10u64.pow(1 + rng.index(4) as u32);
            let integral =
                rademacher_integral(l_ell, c_out, l_hat, c_params, p, n, &quad).unwrap();
            let closed = rademacher_closed(l_ell, c_out, l_hat, c_params, p, n).unwrap();
            assert!(
                integral <= closed * (1.0 + 1e-9),
                "trial {trial}: integral {integral} > closed {closed}"
            );
            assert!(integral > 0.0);
        }
    }

    #[test]
    fn rademacher_integral_scales_as_sqrt_p() {
        let quad = QuadratureSpec::new(0.0, 1.0);
        let a = rademacher_integral(1.0, 1.0, 2.0, 2.0, 50, 10_000, &quad).unwrap();
        let b = rademacher_integral(1.0, 1.0, 2.0, 2.0, 200, 10_000, &quad).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rademacher_integral_degenerate_cases_are_zero() {
        let quad = QuadratureSpec::new(0.0, 1.0);
        assert_eq!(rademacher_integral(1.0, 0.0, 2.0, 2.0, 10, 100, &quad).unwrap(), 0.0);
        assert_eq!(rademacher_integral(1.0, 1.0, 2.0, 0.0, 10, 100, &quad).unwrap(), 0.0);
    }

    #[test]
    fn generalization_bound_matches_frozen_reference() {
        // l_ell=1, c_out=1, l_hat=2 (via l_psi=1, l_x=0.5, identity),
        // c_params=2, c_ell=1, p=100, N=10^4, delta=10^-2. References from
        // 50-digit arithmetic.
        let constants = report(1.0, 1.0, 2.0, 1.0);
        let c = chain(1.0, 0.5, ChainFinal::Identity).unwrap();
        let b = generalization_bound(&constants, &c, 100, 10_000, 1e-2).unwrap();
        assert!((b.term_rademacher - 0.8573148798870196315124949).abs() < 1e-15);
        assert!((b.term_confidence - 0.1384654706081828270546407).abs() < 1e-15);
        assert!((b.total_excess - 0.9957803504952024585671356).abs() < 1e-15);
        assert_eq!(b.total_excess, b.term_rademacher + b.term_confidence);
    }

    #[test]
    fn bound_vanishes_at_rate_root_n() {
        // total_excess·√N approaches 8 l_ell c_out √p + 4 c_ell √(2 ln(4/δ))
        // as N grows; at N = 10^12 the log term has decayed to within 1%.
        let constants = report(1.0, 1.0, 2.0, 1.0);
        let c = chain(1.0, 0.5, ChainFinal::Identity).unwrap();
        let n = 1_000_000_000_000u64;
        let b = generalization_bound(&constants, &c, 100, n, 1e-2).unwrap();
        let limit = 93.84654706081828270546407;
        let scaled = b.total_excess * (n as f64).sqrt();
        assert!((scaled - limit).abs() / limit < 0.01, "{scaled} vs {limit}");
        assert!(scaled > limit, "finite-N value approaches the limit from above");
    }

    #[test]
    fn bound_is_monotone_in_its_drivers() {
        let constants = report(1.0, 1.5, 2.0, 2.0);
        let c = chain(1.0, 0.5, ChainFinal::Identity).unwrap();
        let base = generalization_bound(&constants, &c, 100, 10_000, 1e-2).unwrap();

        let more_n = generalization_bound(&constants, &c, 100, 40_000, 1e-2).unwrap();
        assert!(more_n.total_excess < base.total_excess);

        let more_p = generalization_bound(&constants, &c, 400, 10_000, 1e-2).unwrap();
        assert!(more_p.total_excess > base.total_excess);

        let bigger_out = report(1.0, 2.5, 2.0, 2.0);
        let b = generalization_bound(&bigger_out, &c, 100, 10_000, 1e-2).unwrap();
        assert!(b.total_excess > base.total_excess);

        let bigger_ell = report(1.0, 1.5, 2.0, 3.0);
        let b = generalization_bound(&bigger_ell, &c, 100, 10_000, 1e-2).unwrap();
        assert!(b.total_excess > base.total_excess);

        let steeper = chain(1.0, 0.9, ChainFinal::Identity).unwrap();
        let b = generalization_bound(&constants, &steeper, 100, 10_000, 1e-2).unwrap();
        assert!(b.total_excess > base.total_excess);
    }

    #[test]
    fn generalization_bound_validates_inputs() {
        let constants = report(1.0, 1.0, 2.0, 1.0);
        let c = chain(1.0, 0.5, ChainFinal::Identity).unwrap();
        for delta in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                generalization_bound(&constants, &c, 10, 100, delta),
                Err(BoundError::BadDelta(_))
            ));
        }
        assert!(matches!(
            generalization_bound(&constants, &c, 10, 0, 0.5),
            Err(BoundError::ZeroCount { name: "N" })
        ));
        assert!(matches!(
            generalization_bound(&constants, &c, 0, 100, 0.5),
            Err(BoundError::ZeroCount { name: "p" })
        ));
    }

    #[test]
    fn chain_from_constants_dispatches_by_family() {
        // Contractive with a linear final layer.
        let mut r = report(1.0, 1.5, 2.0, 1.0);
        r.c_params_phi = 1.0;
        r.c_d = 2.0;
        let c = chain_from_constants(&r).unwrap();
        let want_psi = l_psi_contractive(1.5, 2.0).unwrap();
        assert_eq!(c.l_psi, want_psi);
        assert_eq!(c.l_p_x, 1.0);
        assert_eq!(c.l_p_phi, 1.5);

        // MON uses alpha_max and the psi-block bound.
        let mut r = report(1.0, 1.2, 2.0, 1.0);
        r.family = FamilyKind::Mon;
        r.alpha_max = Some(0.07);
        let c = chain_from_constants(&r).unwrap();
        assert_eq!(c.l_psi, l_psi_mon(0.07, 2.0, 1.2, 1.0).unwrap());
        assert_eq!(c.l_p_phi, 0.0);

        // Missing alpha is an error for the stepped families.
        r.alpha_max = None;
        assert!(matches!(chain_from_constants(&r), Err(BoundError::MissingAlpha(_))));

        // LGD formula.
        let mut r = report(1.0, 0.8, 1.0, 1.0);
        r.family = FamilyKind::Lgd;
        r.alpha_max = Some(0.4);
        r.c_params_psi = 1.0;
        let c = chain_from_constants(&r).unwrap();
        assert_eq!(c.l_psi, l_psi_lgd(0.4, 0.8, 1.0).unwrap());
    }

    #[test]
    fn bound_report_csv_round() {
        let constants = report(1.0, 1.0, 2.0, 1.0);
        let c = chain(1.0, 0.5, ChainFinal::Identity).unwrap();
        let b = generalization_bound(&constants, &c, 100, 10_000, 1e-2).unwrap();
        assert_eq!(BoundReport::csv_header(), "N,p,delta,term_rademacher,term_confidence,total_excess");
        let row = b.csv_row();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 6);
        assert_eq!(fields[0], "10000");
        assert_eq!(fields[1], "100");
        assert_eq!(fields[2], "0.01");
        // Fields parse back to the exact values.
        assert_eq!(fields[3].parse::<f64>().unwrap(), b.term_rademacher);
        assert_eq!(fields[5].parse::<f64>().unwrap(), b.total_excess);

        let json = serde_json::to_string(&b).unwrap();
        let back: BoundReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
    }
}
