//! Composite 16-point Gauss-Legendre quadrature with panel doubling.
//!
//! The only awkward integrand in this toolkit is the entropy integrand
//! `√(log(1 + c/r))`, which blows up (integrably) at `r = 0`. With the
//! singularity flag set, the `[0, ε]` slice is replaced by the upper bound
//! `f(ε)·ε` obtained from monotonicity, and quadrature runs on `[ε, upper]`.
//! That keeps the computed value an upper-bound-consistent estimate, which
//! is the direction the covering-number integral is used in.


use super::NumericsError;

/// Positive Gauss-Legendre abscissas on `[-1, 1]` (16-point rule, symmetric).
const GL16_NODES: [f64; 8] = [
    0.095012509837637440185,
    0.281603550779258913230,
    0.458016777657227386342,
    0.617876244402643748447,
    0.755404408355003033895,
    0.865631202387831743880,
    0.944575023073232576078,
    0.989400934991649932596,
];

const GL16_WEIGHTS: [f64; 8] = [
    0.189450610455068496285,
    0.182603415044923588867,
    0.169156519395002538189,
    0.149595988816576732081,
    0.124628971255533872052,
    0.095158511682492784810,
    0.062253523938647892863,
    0.027152459411754094852,
];

/// Fraction of the upper limit used as the singular-slice cutoff.
const SINGULAR_EPS_FACTOR: f64 = 1e-6;

/// Hard cap on panel doubling (16 panels start, 2^20 factor).
const MAX_DOUBLINGS: usize = 20;

/// Integration request. `panels` is the starting panel count; the routine
/// doubles it until two consecutive composite rules agree to `rel_tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub lower: f64,
    pub upper: f64,
    pub panels: usize,
    pub singular_at_zero: bool,
    pub rel_tol: f64,
}

impl QuadratureSpec {
    /// Spec with default panel count (4) and tolerance (1e-8 of the result).
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper, panels: 4, singular_at_zero: false, rel_tol: 1e-8 }
    }

    pub fn with_singularity_at_zero(mut self) -> Self {
        self.singular_at_zero = true;
        self
    }

    pub fn with_panels(mut self, panels: usize) -> Self {
        self.panels = panels;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    fn validate(&self) -> Result<(), NumericsError> {
        let ok_interval = self.lower >= 0.0
            && self.lower < self.upper
            && self.lower.is_finite()
            && self.upper.is_finite();
        if !ok_interval {
            return Err(NumericsError::BadInterval { lower: self.lower, upper: self.upper });
        }
        if self.panels == 0 || !(self.rel_tol > 0.0) {
            return Err(NumericsError::BadQuadratureSpec);
        }
        Ok(())
    }
}

/// Converged integral value with the panel-doubling error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Difference between the last two panel-doubled composite rules; the
    /// singular slice, being an analytic upper bound, contributes none.
    pub error_estimate: f64,
    pub panels: usize,
}

/// Integrates `f` over `[spec.lower, spec.upper]`, doubling panels until the
/// composite rule is stable to `spec.rel_tol` of the result.
pub fn integrate<F>(f: F, spec: &QuadratureSpec) -> Result<Quadrature, NumericsError>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;

    let mut lower = spec.lower;
    let mut slice = 0.0;
    if spec.singular_at_zero && spec.lower == 0.0 {
        let eps = spec.upper * SINGULAR_EPS_FACTOR;
        let fe = eval(&f, eps)?;
        slice = fe * eps;
        lower = eps;
    }

    let mut panels = spec.panels;
    let mut prev = composite(&f, lower, spec.upper, panels)?;
    let mut last_err = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        panels *= 2;
        let cur = composite(&f, lower, spec.upper, panels)?;
        last_err = (cur - prev).abs();
        if last_err <= spec.rel_tol * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok(Quadrature { value: cur + slice, error_estimate: last_err, panels });
        }
        prev = cur;
    }
    Err(NumericsError::QuadratureStall { panels, error_estimate: last_err })
}

fn composite<F>(f: &F, lower: f64, upper: f64, panels: usize) -> Result<f64, NumericsError>
where
    F: Fn(f64) -> f64,
{
    let width = (upper - lower) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lower + width * p as f64;
        let center = a + 0.5 * width;
        let half = 0.5 * width;
        let mut acc = 0.0;
        for (node, weight) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
            let hi = eval(f, center + half * node)?;
            let lo = eval(f, center - half * node)?;
            acc += weight * (hi + lo);
        }
        total += half * acc;
    }
    Ok(total)
}

fn eval<F>(f: &F, at: f64) -> Result<f64, NumericsError>
where
    F: Fn(f64) -> f64,
{
    let v = f(at);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NumericsError::NonFiniteIntegrand { at })
    }
}
