//! The three fixed-point operator families `T_psi(x; d)`, the final layer
//! `P_phi`, parameter sampling under unit-norm constraints, and contraction
//! certification.
//!
//! A *certified* parameter set is one whose contraction factor `L_x < 1` has
//! been established by power iteration, together with the norm bookkeeping
//! (per-block Frobenius norms, step-size admissibility) that the bound
//! arithmetic relies on. All solver and estimation entry points take a
//! [`CertifiedParams`], so an uncertified operator cannot reach a fixed-point
//! iteration.
//!
//! Families:
//! - `Contractive`: `T(x; d) = sigma(W x + U d + b)` with `‖W‖₂ < 1`,
//! - `Mon`: forward-backward step `sigma((I − α(I−W))x + α(U d + b))` with
//!   `W = (1−m)I − AᵀA + B − Bᵀ`, so `I − W` is strongly monotone,
//! - `Lgd`: one gradient step `x − α(Aᵀ(Ax − d) + RᵀR x)` on a regularized
//!   least-squares objective with a learned regularizer `R` (no activation).

use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::numerics::{
    norm2, power_method, sample_on_norm_sphere, DenseMatrix, NumericsError, SeededRng,
};

/// Default power-iteration budget for certification.
pub const DEFAULT_POWER_ITERS: usize = 100;

/// Spectral-norm target applied when a sampled contractive `W` is not
/// already safely inside the unit ball.
pub const SPECTRAL_TARGET: f64 = 0.99;

/// Default leaky-ReLU slope.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Default strong-monotonicity parameter for MON.
pub const DEFAULT_M_MON: f64 = 0.1;

/// Certification refuses contraction factors at or above this ceiling.
const CONTRACTION_CEILING: f64 = 1.0 - 1e-9;

/// Relative floor on `lambda_min(AᵀA + RᵀR)` below which the LGD iteration
/// is treated as rank deficient.
const LGD_RANK_FLOOR: f64 = 1e-8;

/// Slack for block-norm and step-interval checks, absorbing the rounding of
/// norm-1 construction.
const CHECK_SLACK: f64 = 1e-9;

/// Elementwise activation; both choices are 1-Lipschitz, which the
/// contraction arguments require.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    ReLU,
    LeakyReLU { slope: f64 },
}

impl Activation {
    #[inline]
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::ReLU => t.max(0.0),
            Activation::LeakyReLU { slope } => {
                if t >= 0.0 {
                    t
                } else {
                    slope * t
                }
            }
        }
    }

    pub fn apply_in_place(self, v: &mut [f64]) {
        for t in v {
            *t = self.apply(*t);
        }
    }
}

/// Operator family tag used in reports and error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Contractive,
    Mon,
    Lgd,
}

impl FamilyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyKind::Contractive => "contractive",
            FamilyKind::Mon => "mon",
            FamilyKind::Lgd => "lgd",
        }
    }

    /// Number of psi blocks, hence `C_params,Ψ = √(#blocks)` under the
    /// unit-Frobenius normalization.
    pub fn psi_block_count(self) -> usize {
        match self {
            FamilyKind::Contractive => 3, // W, U, b
            FamilyKind::Mon => 4,         // A, B, U, b
            FamilyKind::Lgd => 1,         // R
        }
    }
}

impl core::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Family selection plus the architecture-level data that comes with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyConfig {
    Contractive,
    Mon {
        /// Strong-monotonicity parameter `m` of `I − W`, in `(0, 1)`.
        m_mon: f64,
    },
    Lgd {
        /// Fixed forward matrix `A` (`input_dim x state_dim`); only the
        /// regularizer `R` is a learned parameter.
        forward: DenseMatrix,
    },
}

impl FamilyConfig {
    pub fn kind(&self) -> FamilyKind {
        match self {
            FamilyConfig::Contractive => FamilyKind::Contractive,
            FamilyConfig::Mon { .. } => FamilyKind::Mon,
            FamilyConfig::Lgd { .. } => FamilyKind::Lgd,
        }
    }
}

/// Final layer choice. The linear case stores its weight in
/// [`ParamSet::phi`]; identity requires `output_dim == state_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalLayer {
    Identity,
    Linear,
}

/// Architecture description: family, dimensions, activation, final layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub family: FamilyConfig,
    /// State dimension `k` of the fixed point.
    pub state_dim: usize,
    /// Input dimension `m` of the data vector `d`.
    pub input_dim: usize,
    /// Output dimension `n` after the final layer.
    pub output_dim: usize,
    pub activation: Activation,
    pub final_layer: FinalLayer,
}

impl OperatorSpec {
    pub fn validate(&self) -> Result<(), OperatorError> {
        if self.state_dim == 0 {
            return Err(OperatorError::ZeroDim { what: "state_dim" });
        }
        if self.input_dim == 0 {
            return Err(OperatorError::ZeroDim { what: "input_dim" });
        }
        if self.output_dim == 0 {
            return Err(OperatorError::ZeroDim { what: "output_dim" });
        }
        if let Activation::LeakyReLU { slope } = self.activation {
            if !(slope > 0.0 && slope <= 1.0) {
                return Err(OperatorError::BadLeakySlope { slope });
            }
        }
        match &self.family {
            FamilyConfig::Contractive => {}
            FamilyConfig::Mon { m_mon } => {
                if !(*m_mon > 0.0 && *m_mon < 1.0) {
                    return Err(OperatorError::BadMonotonicity { m_mon: *m_mon });
                }
            }
            FamilyConfig::Lgd { forward } => {
                if forward.rows() != self.input_dim || forward.cols() != self.state_dim {
                    return Err(OperatorError::ForwardShape {
                        rows: forward.rows(),
                        cols: forward.cols(),
                        input_dim: self.input_dim,
                        state_dim: self.state_dim,
                    });
                }
            }
        }
        if self.final_layer == FinalLayer::Identity && self.output_dim != self.state_dim {
            return Err(OperatorError::IdentityDims {
                state_dim: self.state_dim,
                output_dim: self.output_dim,
            });
        }
        Ok(())
    }

    pub fn family_kind(&self) -> FamilyKind {
        self.family.kind()
    }
}

/// Learnable psi blocks, by family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiBlocks {
    Contractive { w: DenseMatrix, u: DenseMatrix, b: Vec<f64> },
    Mon { a: DenseMatrix, b: DenseMatrix, u: DenseMatrix, bias: Vec<f64> },
    Lgd { r: DenseMatrix },
}

impl PsiBlocks {
    pub fn family_kind(&self) -> FamilyKind {
        match self {
            PsiBlocks::Contractive { .. } => FamilyKind::Contractive,
            PsiBlocks::Mon { .. } => FamilyKind::Mon,
            PsiBlocks::Lgd { .. } => FamilyKind::Lgd,
        }
    }

    /// `(name, squared Frobenius norm)` per block, in a fixed order.
    fn block_sq_norms(&self) -> Vec<(&'static str, f64)> {
        fn sq(m: &DenseMatrix) -> f64 {
            let n = m.frobenius_norm();
            n * n
        }
        fn sqv(v: &[f64]) -> f64 {
            let n = norm2(v);
            n * n
        }
        match self {
            PsiBlocks::Contractive { w, u, b } => {
                alloc::vec![("W", sq(w)), ("U", sq(u)), ("b", sqv(b))]
            }
            PsiBlocks::Mon { a, b, u, bias } => {
                alloc::vec![("A", sq(a)), ("B", sq(b)), ("U", sq(u)), ("b", sqv(bias))]
            }
            PsiBlocks::Lgd { r } => alloc::vec![("R", sq(r))],
        }
    }
}

/// Concrete weights: psi blocks, the optional final-layer matrix, and the
/// step size for the families that have one. The step is carried per
/// parameter set because its admissible interval depends on the sampled
/// weights (`α ≤ 2m/‖I−W‖²` for MON, `α < 2/λ_max` for LGD).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub psi: PsiBlocks,
    /// Linear final layer weight (`output_dim x state_dim`); `None` for the
    /// identity final layer.
    pub phi: Option<DenseMatrix>,
    /// Step size; required for MON and LGD, absent for the contractive
    /// layer.
    pub alpha: Option<f64>,
}

impl ParamSet {
    pub fn family_kind(&self) -> FamilyKind {
        self.psi.family_kind()
    }

    /// Stacked Euclidean norm of the psi blocks.
    pub fn psi_norm(&self) -> f64 {
        self.psi.block_sq_norms().into_iter().map(|(_, s)| s).sum::<f64>().sqrt()
    }

    /// Frobenius norm of phi, or zero for the identity final layer.
    pub fn phi_norm(&self) -> f64 {
        self.phi.as_ref().map_or(0.0, DenseMatrix::frobenius_norm)
    }

    /// Stacked Euclidean norm of the full parameter vector theta.
    pub fn theta_norm(&self) -> f64 {
        let psi = self.psi_norm();
        let phi = self.phi_norm();
        (psi * psi + phi * phi).sqrt()
    }

    /// Returns a copy with the step size replaced; used by verification
    /// harnesses that need a pair of operators sharing one admissible step.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    /// Stacked Euclidean distance `‖psi₁ − psi₂‖` between same-family,
    /// same-shape psi blocks (the metric of the parameter-perturbation
    /// lemma; phi and alpha do not enter).
    pub fn psi_distance(&self, other: &Self) -> Result<f64, OperatorError> {
        fn acc_mat(sum: &mut f64, a: &DenseMatrix, b: &DenseMatrix) -> Result<(), OperatorError> {
            if a.rows() != b.rows() || a.cols() != b.cols() {
                return Err(OperatorError::Dimension {
                    what: "psi block entries",
                    expected: a.rows() * a.cols(),
                    found: b.rows() * b.cols(),
                });
            }
            for (x, y) in a.entries().iter().zip(b.entries().iter()) {
                let d = x - y;
                *sum += d * d;
            }
            Ok(())
        }
        fn acc_vec(sum: &mut f64, a: &[f64], b: &[f64]) -> Result<(), OperatorError> {
            if a.len() != b.len() {
                return Err(OperatorError::Dimension {
                    what: "psi bias entries",
                    expected: a.len(),
                    found: b.len(),
                });
            }
            for (x, y) in a.iter().zip(b.iter()) {
                let d = x - y;
                *sum += d * d;
            }
            Ok(())
        }

        let mut sum = 0.0;
        match (&self.psi, &other.psi) {
            (
                PsiBlocks::Contractive { w: w1, u: u1, b: b1 },
                PsiBlocks::Contractive { w: w2, u: u2, b: b2 },
            ) => {
                acc_mat(&mut sum, w1, w2)?;
                acc_mat(&mut sum, u1, u2)?;
                acc_vec(&mut sum, b1, b2)?;
            }
            (
                PsiBlocks::Mon { a: a1, b: b1, u: u1, bias: c1 },
                PsiBlocks::Mon { a: a2, b: b2, u: u2, bias: c2 },
            ) => {
                acc_mat(&mut sum, a1, a2)?;
                acc_mat(&mut sum, b1, b2)?;
                acc_mat(&mut sum, u1, u2)?;
                acc_vec(&mut sum, c1, c2)?;
            }
            (PsiBlocks::Lgd { r: r1 }, PsiBlocks::Lgd { r: r2 }) => {
                acc_mat(&mut sum, r1, r2)?;
            }
            _ => {
                return Err(OperatorError::FamilyMismatch {
                    expected: self.family_kind(),
                    found: other.family_kind(),
                })
            }
        }
        Ok(sum.sqrt())
    }
}

/// Knobs for certification; the power-iteration budget matters when the
/// certificate feeds sharp inequalities (verification harnesses raise it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub power_iters: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { power_iters: DEFAULT_POWER_ITERS }
    }
}

/// Frobenius norm of one named parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockNorm {
    pub name: String,
    pub frobenius: f64,
}

/// Everything certification established about a parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Contraction factor of the state map, strictly below one.
    pub l_x: f64,
    pub block_norms: Vec<BlockNorm>,
    pub psi_norm: f64,
    pub phi_norm: f64,
    pub alpha: Option<f64>,
    /// Extremes of `AᵀA + RᵀR` (LGD only).
    pub gram_lambda_max: Option<f64>,
    pub gram_lambda_min: Option<f64>,
    /// Power-iteration budget used for the spectral estimates.
    pub power_iters: usize,
    /// Last relative change of the `l_x` power iterate.
    pub power_residual: f64,
}

/// How the data vector enters one iteration step.
#[derive(Debug, Clone)]
enum InputForm {
    /// `scale * (U d + bias)`.
    Affine { u: DenseMatrix, bias: Vec<f64>, scale: f64 },
    /// `(alpha Aᵀ) d`.
    Adjoint { at_scaled: DenseMatrix },
}

/// Cached linear form of one iteration step: `x ↦ act(M x + shift(d))`.
#[derive(Debug, Clone)]
struct IterationForm {
    matrix: DenseMatrix,
    input: InputForm,
    activation: Option<Activation>,
}

/// A parameter set together with its certificate and the cached iteration
/// form the solver uses. Construction only through [`certify`].
#[derive(Debug, Clone)]
pub struct CertifiedParams {
    spec: OperatorSpec,
    params: ParamSet,
    certificate: Certificate,
    iteration: IterationForm,
}

/// Serializable snapshot of a (possibly certified) parameter set; the block
/// names, shapes, and row-major entries come from the `ParamSet` encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub spec: OperatorSpec,
    pub params: ParamSet,
    pub certificate: Option<Certificate>,
}

impl CertifiedParams {
    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    /// Certified contraction factor `L_x`.
    pub fn l_x(&self) -> f64 {
        self.certificate.l_x
    }

    /// Iteration matrix of the state map (`W`, `I − α(I−W)`, or `I − αG`).
    pub fn iteration_matrix(&self) -> &DenseMatrix {
        &self.iteration.matrix
    }

    /// Precomputes the data-dependent shift of one step, validating the
    /// input dimension.
    pub fn input_shift(&self, d: &[f64]) -> Result<Vec<f64>, OperatorError> {
        if d.len() != self.spec.input_dim {
            return Err(OperatorError::Dimension {
                what: "input vector",
                expected: self.spec.input_dim,
                found: d.len(),
            });
        }
        Ok(match &self.iteration.input {
            InputForm::Affine { u, bias, scale } => {
                let mut shift = u.matvec(d);
                for (s, b) in shift.iter_mut().zip(bias.iter()) {
                    *s = *scale * (*s + b);
                }
                shift
            }
            InputForm::Adjoint { at_scaled } => at_scaled.matvec(d),
        })
    }

    /// One iteration step with a precomputed shift, written into `out`.
    pub fn step_with_shift(&self, x: &[f64], shift: &[f64], out: &mut [f64]) {
        self.iteration.matrix.matvec_into(x, out);
        for (o, s) in out.iter_mut().zip(shift.iter()) {
            *o += s;
        }
        if let Some(act) = self.iteration.activation {
            act.apply_in_place(out);
        }
    }

    /// One application of `T_psi(x; d)`.
    pub fn apply(&self, x: &[f64], d: &[f64]) -> Result<Vec<f64>, OperatorError> {
        if x.len() != self.spec.state_dim {
            return Err(OperatorError::Dimension {
                what: "state vector",
                expected: self.spec.state_dim,
                found: x.len(),
            });
        }
        let shift = self.input_shift(d)?;
        let mut out = alloc::vec![0.0; self.spec.state_dim];
        self.step_with_shift(x, &shift, &mut out);
        Ok(out)
    }

    /// Final-layer output `P_phi(x)`.
    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>, OperatorError> {
        if x.len() != self.spec.state_dim {
            return Err(OperatorError::Dimension {
                what: "state vector",
                expected: self.spec.state_dim,
                found: x.len(),
            });
        }
        final_apply(self.params.phi.as_ref(), x)
    }

    /// Snapshot for serialization.
    pub fn document(&self) -> ParamsDocument {
        ParamsDocument {
            spec: self.spec.clone(),
            params: self.params.clone(),
            certificate: Some(self.certificate.clone()),
        }
    }
}

/// Errors from operator construction, validation, and certification.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("dimension {what} must be nonzero")]
    ZeroDim { what: &'static str },
    #[error("monotonicity parameter must lie in (0, 1) (got {m_mon})")]
    BadMonotonicity { m_mon: f64 },
    #[error("leaky ReLU slope must lie in (0, 1] (got {slope})")]
    BadLeakySlope { slope: f64 },
    #[error("identity final layer needs output_dim = state_dim (got {output_dim} vs {state_dim})")]
    IdentityDims { state_dim: usize, output_dim: usize },
    #[error("forward matrix is {rows}x{cols}, spec wants {input_dim}x{state_dim}")]
    ForwardShape { rows: usize, cols: usize, input_dim: usize, state_dim: usize },
    #[error("parameter family {found} does not match spec family {expected}")]
    FamilyMismatch { expected: FamilyKind, found: FamilyKind },
    #[error("block {name} is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    BlockShape {
        name: &'static str,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("block {name} has Frobenius norm {norm}, outside the unit ball")]
    BlockNormExceeded { name: &'static str, norm: f64 },
    #[error("{what} expects length {expected}, got {found}")]
    Dimension { what: &'static str, expected: usize, found: usize },
    #[error("family {family} requires a step size alpha")]
    AlphaMissing { family: FamilyKind },
    #[error("family {family} takes no step size alpha")]
    AlphaUnexpected { family: FamilyKind },
    #[error("alpha = {alpha} outside the admissible interval (max {max})")]
    AlphaOutOfRange { alpha: f64, max: f64 },
    #[error("linear final layer needs a phi block")]
    PhiMissing,
    #[error("identity final layer takes no phi block")]
    PhiUnexpected,
    #[error("gram matrix is rank deficient (lambda_min {lambda_min}, lambda_max {lambda_max})")]
    RankDeficient { lambda_min: f64, lambda_max: f64 },
    #[error("contraction factor {l_x} is not certifiably below one")]
    ContractionViolation { l_x: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// `W = (1−m)I − AᵀA + B − Bᵀ`, the MON weight parameterization.
///
/// The skew part contributes nothing to the quadratic form, so
/// `xᵀ(I−W)x = m‖x‖² + ‖Ax‖² ≥ m‖x‖²` holds for every `x` by construction.
/// Accepts the closed end `m_mon = 1` for degenerate constructions; the
/// architecture-level invariant `m_mon ∈ (0, 1)` is enforced by
/// [`OperatorSpec::validate`].
pub fn mon_build_w(a: &DenseMatrix, b: &DenseMatrix, m_mon: f64) -> Result<DenseMatrix, OperatorError> {
    if !a.is_square() || a.rows() != b.rows() || !b.is_square() {
        return Err(OperatorError::BlockShape {
            name: "B",
            rows: b.rows(),
            cols: b.cols(),
            expected_rows: a.rows(),
            expected_cols: a.rows(),
        });
    }
    if !(m_mon > 0.0 && m_mon <= 1.0) {
        return Err(OperatorError::BadMonotonicity { m_mon });
    }
    let mut w = a.gram().scale(-1.0);
    w.shift_diag(1.0 - m_mon);
    let skew = b.sub(&b.transpose());
    Ok(w.add_scaled(1.0, &skew))
}

/// `P_phi(x)`: identity when `phi` is absent, otherwise `phi x`.
pub fn final_apply(phi: Option<&DenseMatrix>, x: &[f64]) -> Result<Vec<f64>, OperatorError> {
    match phi {
        None => Ok(x.to_vec()),
        Some(m) => {
            if m.cols() != x.len() {
                return Err(OperatorError::Dimension {
                    what: "final layer input",
                    expected: m.cols(),
                    found: x.len(),
                });
            }
            Ok(m.matvec(x))
        }
    }
}

/// One application of the contractive layer. Thin family-checked wrapper
/// over [`CertifiedParams::apply`].
pub fn contractive_apply(
    op: &CertifiedParams,
    x: &[f64],
    d: &[f64],
) -> Result<Vec<f64>, OperatorError> {
    expect_family(op, FamilyKind::Contractive)?;
    op.apply(x, d)
}

/// One MON forward-backward step. The step size was validated against
/// `0 ≤ α ≤ 2 m_mon / ‖I−W‖²` at certification time.
pub fn mon_apply(op: &CertifiedParams, x: &[f64], d: &[f64]) -> Result<Vec<f64>, OperatorError> {
    expect_family(op, FamilyKind::Mon)?;
    op.apply(x, d)
}

/// One LGD step `x − α(Aᵀ(Ax − d) + RᵀR x)`; no activation is applied.
pub fn lgd_apply(op: &CertifiedParams, x: &[f64], d: &[f64]) -> Result<Vec<f64>, OperatorError> {
    expect_family(op, FamilyKind::Lgd)?;
    op.apply(x, d)
}

fn expect_family(op: &CertifiedParams, family: FamilyKind) -> Result<(), OperatorError> {
    let found = op.spec.family_kind();
    if found != family {
        return Err(OperatorError::FamilyMismatch { expected: family, found });
    }
    Ok(())
}

/// Draws a parameter set under the experimental normalization: every psi
/// block (and phi, when present) uniform on the unit Frobenius sphere, the
/// contractive `W` spectrally rescaled to [`SPECTRAL_TARGET`] if needed, and
/// the step size set to the midpoint of its admissible interval
/// (`α = m_mon/‖I−W‖²` for MON, `α = 1/λ_max` for LGD).
///
/// Sampled sets always pass certification against the same spec.
pub fn sample_params(spec: &OperatorSpec, rng: &mut SeededRng) -> ParamSet {
    let k = spec.state_dim;
    let m = spec.input_dim;
    let sphere = |rows: usize, cols: usize, rng: &mut SeededRng| {
        sample_on_norm_sphere(rows, cols, 1.0, rng)
            .expect("unit-sphere sampling with nonzero dims cannot fail")
    };
    let sphere_vec = |len: usize, rng: &mut SeededRng| -> Vec<f64> {
        sphere(len, 1, rng).entries().to_vec()
    };

    let (psi, alpha) = match &spec.family {
        FamilyConfig::Contractive => {
            let mut w = sphere(k, k, rng);
            let (sigma, _) = power_method(&w, DEFAULT_POWER_ITERS, rng)
                .expect("power iteration on a finite sampled matrix cannot fail");
            if sigma > SPECTRAL_TARGET {
                w.scale_in_place(SPECTRAL_TARGET / sigma);
            }
            let u = sphere(k, m, rng);
            let b = sphere_vec(k, rng);
            (PsiBlocks::Contractive { w, u, b }, None)
        }
        FamilyConfig::Mon { m_mon } => {
            let a = sphere(k, k, rng);
            let b = sphere(k, k, rng);
            let u = sphere(k, m, rng);
            let bias = sphere_vec(k, rng);
            let w = mon_build_w(&a, &b, *m_mon).expect("sampled MON blocks are square");
            let mut i_minus_w = w.scale(-1.0);
            i_minus_w.shift_diag(1.0);
            let (ell, _) = power_method(&i_minus_w, DEFAULT_POWER_ITERS, rng)
                .expect("power iteration on a finite sampled matrix cannot fail");
            // ‖I−W‖ ≥ m_mon > 0, so the division is safe.
            let alpha = m_mon / (ell * ell);
            (PsiBlocks::Mon { a, b, u, bias }, Some(alpha))
        }
        FamilyConfig::Lgd { forward } => {
            let r = sphere(k, k, rng);
            let gram = forward.gram().add_scaled(1.0, &r.gram());
            let (lambda_max, _) = power_method(&gram, DEFAULT_POWER_ITERS, rng)
                .expect("power iteration on a finite sampled matrix cannot fail");
            // trace(RᵀR) = 1 keeps λ_max ≥ 1/k strictly positive.
            let alpha = 1.0 / lambda_max.max(f64::MIN_POSITIVE);
            (PsiBlocks::Lgd { r }, Some(alpha))
        }
    };

    let phi = match spec.final_layer {
        FinalLayer::Identity => None,
        FinalLayer::Linear => Some(sphere(spec.output_dim, k, rng)),
    };

    ParamSet { psi, phi, alpha }
}

/// Certifies a parameter set against its spec: validates shapes, block
/// norms, and step admissibility, then establishes the contraction factor
/// by power iteration on the iteration matrix.
pub fn certify(
    spec: &OperatorSpec,
    params: ParamSet,
    opts: &CertifyOptions,
    rng: &mut SeededRng,
) -> Result<CertifiedParams, OperatorError> {
    spec.validate()?;
    let k = spec.state_dim;
    let m = spec.input_dim;

    let expected = spec.family_kind();
    let found = params.family_kind();
    if expected != found {
        return Err(OperatorError::FamilyMismatch { expected, found });
    }

    // Shape checks, block by block.
    match (&params.psi, &spec.family) {
        (PsiBlocks::Contractive { w, u, b }, FamilyConfig::Contractive) => {
            check_shape("W", w, k, k)?;
            check_shape("U", u, k, m)?;
            check_len("b", b, k)?;
        }
        (PsiBlocks::Mon { a, b, u, bias }, FamilyConfig::Mon { .. }) => {
            check_shape("A", a, k, k)?;
            check_shape("B", b, k, k)?;
            check_shape("U", u, k, m)?;
            check_len("b", bias, k)?;
        }
        (PsiBlocks::Lgd { r }, FamilyConfig::Lgd { .. }) => {
            if r.cols() != k {
                return Err(OperatorError::BlockShape {
                    name: "R",
                    rows: r.rows(),
                    cols: r.cols(),
                    expected_rows: r.rows(),
                    expected_cols: k,
                });
            }
        }
        _ => unreachable!("family equality was checked above"),
    }

    match (spec.final_layer, &params.phi) {
        (FinalLayer::Identity, Some(_)) => return Err(OperatorError::PhiUnexpected),
        (FinalLayer::Linear, None) => return Err(OperatorError::PhiMissing),
        (FinalLayer::Linear, Some(phi)) => check_shape("phi", phi, spec.output_dim, k)?,
        (FinalLayer::Identity, None) => {}
    }

    // Unit-ball constraint per block (phi included when present).
    let mut block_norms = Vec::new();
    for (name, sq) in params.psi.block_sq_norms() {
        let norm = sq.sqrt();
        if norm > 1.0 + CHECK_SLACK {
            return Err(OperatorError::BlockNormExceeded { name, norm });
        }
        block_norms.push(BlockNorm { name: String::from(name), frobenius: norm });
    }
    if let Some(phi) = &params.phi {
        let norm = phi.frobenius_norm();
        if norm > 1.0 + CHECK_SLACK {
            return Err(OperatorError::BlockNormExceeded { name: "phi", norm });
        }
        block_norms.push(BlockNorm { name: String::from("phi"), frobenius: norm });
    }

    // Step-size admissibility and the iteration matrix.
    let mut gram_lambda_max = None;
    let mut gram_lambda_min = None;
    let (matrix, input, activation) = match (&params.psi, &spec.family) {
        (PsiBlocks::Contractive { w, u, b }, FamilyConfig::Contractive) => {
            if params.alpha.is_some() {
                return Err(OperatorError::AlphaUnexpected { family: expected });
            }
            (
                w.clone(),
                InputForm::Affine { u: u.clone(), bias: b.clone(), scale: 1.0 },
                Some(spec.activation),
            )
        }
        (PsiBlocks::Mon { a, b, u, bias }, FamilyConfig::Mon { m_mon }) => {
            let alpha = params.alpha.ok_or(OperatorError::AlphaMissing { family: expected })?;
            let w = mon_build_w(a, b, *m_mon)?;
            let mut i_minus_w = w.scale(-1.0);
            i_minus_w.shift_diag(1.0);
            let (ell, _) = power_method(&i_minus_w, opts.power_iters, rng)?;
            let max = 2.0 * m_mon / (ell * ell);
            if !(alpha >= 0.0 && alpha <= max * (1.0 + CHECK_SLACK)) {
                return Err(OperatorError::AlphaOutOfRange { alpha, max });
            }
            let mut matrix = i_minus_w.scale(-alpha);
            matrix.shift_diag(1.0);
            (
                matrix,
                InputForm::Affine { u: u.clone(), bias: bias.clone(), scale: alpha },
                Some(spec.activation),
            )
        }
        (PsiBlocks::Lgd { r }, FamilyConfig::Lgd { forward }) => {
            let alpha = params.alpha.ok_or(OperatorError::AlphaMissing { family: expected })?;
            let gram = forward.gram().add_scaled(1.0, &r.gram());
            let (lambda_max, lambda_min) =
                crate::numerics::extreme_eigs_sym(&gram, opts.power_iters, rng)?;
            gram_lambda_max = Some(lambda_max);
            gram_lambda_min = Some(lambda_min);
            if lambda_min < LGD_RANK_FLOOR * lambda_max {
                return Err(OperatorError::RankDeficient { lambda_min, lambda_max });
            }
            let max = 2.0 / lambda_max;
            if !(alpha > 0.0 && alpha < max * (1.0 + CHECK_SLACK)) {
                return Err(OperatorError::AlphaOutOfRange { alpha, max });
            }
            let mut matrix = gram.scale(-alpha);
            matrix.shift_diag(1.0);
            let at_scaled = forward.transpose().scale(alpha);
            (matrix, InputForm::Adjoint { at_scaled }, None)
        }
        _ => unreachable!("family equality was checked above"),
    };

    let (l_x, power_residual) = power_method(&matrix, opts.power_iters, rng)?;
    if l_x >= CONTRACTION_CEILING {
        return Err(OperatorError::ContractionViolation { l_x });
    }

    let certificate = Certificate {
        l_x,
        block_norms,
        psi_norm: params.psi_norm(),
        phi_norm: params.phi_norm(),
        alpha: params.alpha,
        gram_lambda_max,
        gram_lambda_min,
        power_iters: opts.power_iters,
        power_residual,
    };

    Ok(CertifiedParams {
        spec: spec.clone(),
        params,
        certificate,
        iteration: IterationForm { matrix, input, activation },
    })
}

/// Contraction factor of a parameter set: `‖W‖₂`, `‖I − α(I−W)‖₂`, or
/// `‖I − α(AᵀA + RᵀR)‖₂` by family, established by power iteration through
/// full certification.
pub fn contraction_factor(
    spec: &OperatorSpec,
    params: ParamSet,
    opts: &CertifyOptions,
    rng: &mut SeededRng,
) -> Result<f64, OperatorError> {
    certify(spec, params, opts, rng).map(|op| op.certificate.l_x)
}

/// Samples and certifies in one call.
pub fn sample_certified(
    spec: &OperatorSpec,
    opts: &CertifyOptions,
    rng: &mut SeededRng,
) -> Result<CertifiedParams, OperatorError> {
    let params = sample_params(spec, rng);
    certify(spec, params, opts, rng)
}

fn check_shape(
    name: &'static str,
    m: &DenseMatrix,
    rows: usize,
    cols: usize,
) -> Result<(), OperatorError> {
    if m.rows() != rows || m.cols() != cols {
        return Err(OperatorError::BlockShape {
            name,
            rows: m.rows(),
            cols: m.cols(),
            expected_rows: rows,
            expected_cols: cols,
        });
    }
    Ok(())
}

fn check_len(name: &'static str, v: &[f64], len: usize) -> Result<(), OperatorError> {
    if v.len() != len {
        return Err(OperatorError::BlockShape {
            name,
            rows: v.len(),
            cols: 1,
            expected_rows: len,
            expected_cols: 1,
        });
    }
    Ok(())
}
