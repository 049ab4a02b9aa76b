//! Monte-Carlo verification of every analytic inequality the certification
//! chain rests on: the fixed-point perturbation bound, the per-family
//! ψ-Lipschitz constants, certified contraction factors (cross-checked
//! against an independent Jacobi eigensolver), the parameter-ball covering
//! bound, the softmax loss lemma, and the Dudley integral against its
//! closed form.
//!
//! Every check reports a worst observed empirical/analytic ratio; the
//! inequality holds iff the ratio stays at or below one. Checks draw from
//! substreams derived per family and per sample, so a seed pins the entire
//! run.

use deqcert_core::bound::{
    covering_bound, l_psi_contractive, l_psi_lgd, l_psi_mon, rademacher_closed,
    rademacher_integral,
};
use deqcert_core::fixed_point::{solve, SolveConfig};
use deqcert_core::losses::{ce_softmax_grad, ce_softmax_loss};
use deqcert_core::numerics::{diff_norm2, norm2, QuadratureSpec, SeededRng};
use deqcert_core::operators::{
    certify, sample_params, Activation, CertifiedParams, CertifyOptions, FamilyConfig, FamilyKind,
    FinalLayer, OperatorSpec,
};
use deqcert_oracles::{greedy_cover_count, spectral_norm_jacobi, trapezoid_log_integral};

use crate::experiments::sample_forward;
use crate::CliError;

/// Absolute slack on the fixed-point perturbation inequality, covering the
/// resolution error of the two computed fixed points.
pub const PERTURBATION_SLACK: f64 = 2e-9;

/// Per-coordinate tolerance for the finite-difference gradient match.
pub const GRADIENT_FD_TOLERANCE: f64 = 1e-5;

/// Relative tolerance for power iteration versus the Jacobi eigensolver.
pub const JACOBI_TOLERANCE: f64 = 1e-6;

/// Cover radii exercised by the covering check.
pub const COVER_RADII: [f64; 5] = [0.05, 0.1, 0.5, 1.0, 2.0];

/// Fixed points for the perturbation check are resolved well below the
/// slack; MON contractions near one need the large iteration budget.
const VERIFY_SOLVE: SolveConfig = SolveConfig { tolerance: 1e-10, max_iters: 200_000 };

/// Certification budget when only structural constants are read off.
const CHEAP_CERTIFY: CertifyOptions = CertifyOptions { power_iters: 100 };

/// Budget when `1/(1 − l_x)` enters an inequality; keeps the contraction
/// estimate within a fraction of a percent for the spectra seen here.
const SHARP_CERTIFY: CertifyOptions = CertifyOptions { power_iters: 2_000 };

/// Budget when the estimate is compared against the eigen-oracle itself.
const ORACLE_CERTIFY: CertifyOptions = CertifyOptions { power_iters: 200_000 };

/// One verified inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub name: &'static str,
    /// Monte-Carlo draws that entered the worst-case ratio.
    pub samples: usize,
    /// Largest observed empirical/analytic ratio; the inequality holds iff
    /// this is at most one.
    pub worst_ratio: f64,
    pub pass: bool,
    pub detail: String,
}

impl LemmaCheck {
    fn from_ratio(name: &'static str, samples: usize, worst_ratio: f64, detail: String) -> Self {
        Self { name, samples, worst_ratio, pass: worst_ratio <= 1.0, detail }
    }
}

/// Monte-Carlo sample counts and problem sizes for one verification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifySizes {
    /// ψ pairs per family for the perturbation check.
    pub perturbation_pairs: usize,
    /// Two-point samples per family for the ψ-Lipschitz check.
    pub lipschitz_pairs: usize,
    /// Certified operators per family for the contraction check.
    pub contraction_ops: usize,
    /// State pairs per operator for the contraction check.
    pub contraction_pairs: usize,
    /// Grid points on the interval for the 1-d covering check.
    pub covering_grid_1d: usize,
    /// Grid side length for the 2-d covering check (points are the grid
    /// nodes that fall inside the ball).
    pub covering_grid_side: usize,
    /// Random constant sets for the Dudley comparison.
    pub dudley_sets: usize,
    /// Random logit/label draws for the softmax norm bound.
    pub softmax_samples: usize,
    /// Logit vectors whose gradients are finite-difference checked.
    pub grad_samples: usize,
    pub state_dim: usize,
    pub input_dim: usize,
}

impl Default for VerifySizes {
    fn default() -> Self {
        Self {
            perturbation_pairs: 1_000,
            lipschitz_pairs: 10_000,
            contraction_ops: 3,
            contraction_pairs: 10_000,
            covering_grid_1d: 10_001,
            covering_grid_side: 120,
            dudley_sets: 50,
            softmax_samples: 100_000,
            grad_samples: 200,
            state_dim: 30,
            input_dim: 20,
        }
    }
}

impl VerifySizes {
    /// Scaled-down sizes for fast smoke tests.
    pub fn quick() -> Self {
        Self {
            perturbation_pairs: 30,
            lipschitz_pairs: 150,
            contraction_ops: 2,
            contraction_pairs: 300,
            covering_grid_1d: 501,
            covering_grid_side: 31,
            dudley_sets: 10,
            softmax_samples: 3_000,
            grad_samples: 20,
            state_dim: 8,
            input_dim: 6,
        }
    }
}

/// The three family specs a verification run exercises. The LGD gram must
/// have full column rank, which needs at least as many measurements as
/// states, so that family swaps the two dimensions.
fn family_specs(
    sizes: &VerifySizes,
    rng: &mut SeededRng,
) -> Result<Vec<OperatorSpec>, CliError> {
    let (k, m) = (sizes.state_dim, sizes.input_dim);
    let forward = sample_forward(k.max(m), k.min(m), rng).map_err(CliError::from)?;
    let base = |family, state_dim: usize, input_dim: usize| OperatorSpec {
        family,
        state_dim,
        input_dim,
        output_dim: state_dim,
        activation: Activation::ReLU,
        final_layer: FinalLayer::Identity,
    };
    Ok(vec![
        base(FamilyConfig::Contractive, k, m),
        base(FamilyConfig::Mon { m_mon: 0.1 }, k, m),
        base(FamilyConfig::Lgd { forward }, k.min(m), k.max(m)),
    ])
}

/// Samples two parameter sets for one spec and certifies them under a
/// shared step size (the smaller of the two admissible midpoints), so a
/// single ψ-Lipschitz constant covers the pair.
fn certified_pair(
    spec: &OperatorSpec,
    opts: &CertifyOptions,
    rng: &mut SeededRng,
) -> Result<(CertifiedParams, CertifiedParams), CliError> {
    let mut p1 = sample_params(spec, rng);
    let mut p2 = sample_params(spec, rng);
    if let (Some(a1), Some(a2)) = (p1.alpha, p2.alpha) {
        let shared = a1.min(a2);
        p1 = p1.with_alpha(shared);
        p2 = p2.with_alpha(shared);
    }
    let op1 = certify(spec, p1, opts, rng)?;
    let op2 = certify(spec, p2, opts, rng)?;
    Ok((op1, op2))
}

/// ψ-Lipschitz constant valid for the pair at one state/input, from exact
/// per-sample radii and the pair's own block norms.
fn pair_l_psi(
    op1: &CertifiedParams,
    op2: &CertifiedParams,
    state_norm: f64,
    input_norm: f64,
) -> Result<f64, CliError> {
    let family = op1.spec().family_kind();
    let l_psi = match family {
        FamilyKind::Contractive => l_psi_contractive(state_norm, input_norm),
        FamilyKind::Mon => {
            let alpha = op1.certificate().alpha.expect("MON certificates carry alpha");
            // The A-block norm bounds the spectral norm in the weight
            // difference; take the larger of the pair.
            let a_norm = |op: &CertifiedParams| {
                op.certificate()
                    .block_norms
                    .iter()
                    .find(|b| b.name == "A")
                    .map_or(1.0, |b| b.frobenius)
            };
            l_psi_mon(alpha, a_norm(op1).max(a_norm(op2)), state_norm, input_norm)
        }
        FamilyKind::Lgd => {
            let alpha = op1.certificate().alpha.expect("LGD certificates carry alpha");
            let r_norm = op1.params().psi_norm().max(op2.params().psi_norm());
            l_psi_lgd(alpha, state_norm, r_norm)
        }
    };
    l_psi.map_err(|e| CliError::Certification(e.to_string()))
}

fn random_vec_with_norm(len: usize, norm: f64, rng: &mut SeededRng) -> Vec<f64> {
    let mut v = rng.normal_vec(len);
    let current = norm2(&v);
    if current > 0.0 {
        for x in v.iter_mut() {
            *x *= norm / current;
        }
    }
    v
}

/// Fixed points of two nearby operators stay within
/// `L_psi/(1 − L_x) · ‖ψ₁ − ψ₂‖` of each other, up to solver resolution.
pub fn check_perturbation(sizes: &VerifySizes, seed: u64) -> Result<LemmaCheck, CliError> {
    let master = SeededRng::new(seed).derive(1);
    let specs = family_specs(sizes, &mut master.derive(0xd))?;

    let mut worst_ratio = 0.0f64;
    let mut worst_at = String::from("none");
    let mut samples = 0;
    for (fi, spec) in specs.iter().enumerate() {
        let family_rng = master.derive(fi as u64 + 1);
        for pair in 0..sizes.perturbation_pairs {
            let mut rng = family_rng.derive(pair as u64);
            let (op1, op2) = certified_pair(spec, &SHARP_CERTIFY, &mut rng)?;
            let d_norm = rng.uniform_in(0.1, 2.0);
            let d = random_vec_with_norm(spec.input_dim, d_norm, &mut rng);

            // The triangle step of the bound evaluates the ψ-Lipschitz
            // constant at one of the two fixed points; the larger norm
            // covers either choice.
            let x1 = solve(&op1, &d, &VERIFY_SOLVE).map_err(CliError::from)?;
            let x2 = solve(&op2, &d, &VERIFY_SOLVE).map_err(CliError::from)?;
            let state_norm = norm2(&x1.x_star).max(norm2(&x2.x_star));
            let l_psi = pair_l_psi(&op1, &op2, state_norm, norm2(&d))?;

            let lhs = diff_norm2(&x1.x_star, &x2.x_star);
            let l_x = op1.l_x().max(op2.l_x());
            let distance = op1.params().psi_distance(op2.params())?;
            let rhs = l_psi / (1.0 - l_x) * distance;
            let ratio = lhs / (rhs + PERTURBATION_SLACK);
            samples += 1;
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_at = format!("{} pair {pair}", spec.family_kind());
            }
        }
    }

    Ok(LemmaCheck::from_ratio(
        "fixed-point-perturbation",
        samples,
        worst_ratio,
        format!(
            "{} pairs per family, slack {PERTURBATION_SLACK:.0e}, worst at {worst_at}",
            sizes.perturbation_pairs
        ),
    ))
}

/// One operator application moves at most `L_psi · ‖ψ₁ − ψ₂‖` when only the
/// weights change, for every family.
pub fn check_psi_lipschitz(sizes: &VerifySizes, seed: u64) -> Result<LemmaCheck, CliError> {
    let master = SeededRng::new(seed).derive(2);
    let specs = family_specs(sizes, &mut master.derive(0xd))?;

    let mut worst_ratio = 0.0f64;
    let mut worst_at = String::from("none");
    let mut samples = 0;
    for (fi, spec) in specs.iter().enumerate() {
        let family_rng = master.derive(fi as u64 + 1);
        for pair in 0..sizes.lipschitz_pairs {
            let mut rng = family_rng.derive(pair as u64);
            let (op1, op2) = certified_pair(spec, &CHEAP_CERTIFY, &mut rng)?;
            let x_norm = rng.uniform_in(0.0, 2.0);
            let d_norm = rng.uniform_in(0.0, 2.0);
            let x = random_vec_with_norm(spec.state_dim, x_norm, &mut rng);
            let d = random_vec_with_norm(spec.input_dim, d_norm, &mut rng);

            let y1 = op1.apply(&x, &d)?;
            let y2 = op2.apply(&x, &d)?;
            let lhs = diff_norm2(&y1, &y2);
            let l_psi = pair_l_psi(&op1, &op2, norm2(&x), norm2(&d))?;
            let distance = op1.params().psi_distance(op2.params())?;

            let ratio = lhs / (l_psi * distance);
            samples += 1;
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_at = format!("{} pair {pair}", spec.family_kind());
            }
        }
    }

    Ok(LemmaCheck::from_ratio(
        "psi-lipschitz",
        samples,
        worst_ratio,
        format!(
            "{} two-point samples per family over states and inputs of norm up to 2, worst at {worst_at}",
            sizes.lipschitz_pairs
        ),
    ))
}

/// Certified contraction factors dominate observed two-point ratios of the
/// state map, and the power-iteration estimate agrees with an independent
/// Jacobi eigensolver.
pub fn check_contraction(sizes: &VerifySizes, seed: u64) -> Result<LemmaCheck, CliError> {
    let master = SeededRng::new(seed).derive(3);
    let specs = family_specs(sizes, &mut master.derive(0xd))?;

    let mut worst_ratio = 0.0f64;
    let mut worst_jacobi = 0.0f64;
    let mut samples = 0;
    for (fi, spec) in specs.iter().enumerate() {
        let family_rng = master.derive(fi as u64 + 1);
        for op_index in 0..sizes.contraction_ops {
            let mut rng = family_rng.derive(op_index as u64);
            let params = sample_params(spec, &mut rng);
            let op = certify(spec, params, &ORACLE_CERTIFY, &mut rng)?;

            let matrix = op.iteration_matrix();
            let sigma =
                spectral_norm_jacobi(matrix.entries(), matrix.rows(), matrix.cols());
            let deviation = (op.l_x() - sigma).abs() / sigma.max(f64::MIN_POSITIVE);
            worst_jacobi = worst_jacobi.max(deviation);

            for _ in 0..sizes.contraction_pairs {
                let x1 = random_vec_with_norm(spec.state_dim, rng.uniform_in(0.0, 2.0), &mut rng);
                let x2 = random_vec_with_norm(spec.state_dim, rng.uniform_in(0.0, 2.0), &mut rng);
                let d = random_vec_with_norm(spec.input_dim, rng.uniform_in(0.0, 2.0), &mut rng);
                let y1 = op.apply(&x1, &d)?;
                let y2 = op.apply(&x2, &d)?;
                let dx = diff_norm2(&x1, &x2);
                if dx == 0.0 {
                    continue;
                }
                let ratio = diff_norm2(&y1, &y2) / (op.l_x() * dx);
                samples += 1;
                worst_ratio = worst_ratio.max(ratio);
            }
        }
    }

    let jacobi_ok = worst_jacobi <= JACOBI_TOLERANCE;
    let mut check = LemmaCheck::from_ratio(
        "contraction-factor",
        samples,
        worst_ratio,
        format!(
            "{} state pairs per operator, {} operators per family; worst Jacobi deviation {worst_jacobi:.2e} (tolerance {JACOBI_TOLERANCE:.0e})",
            sizes.contraction_pairs, sizes.contraction_ops
        ),
    );
    check.pass = check.pass && jacobi_ok;
    Ok(check)
}

/// Greedy covers of the scaled parameter ball never exceed the analytic
/// covering-number bound, in one and two dimensions.
pub fn check_covering(sizes: &VerifySizes, _seed: u64) -> Result<LemmaCheck, CliError> {
    let (l_hat, c_params) = (2.0, 1.0);
    let rho = l_hat * c_params;

    let line: Vec<Vec<f64>> = (0..sizes.covering_grid_1d)
        .map(|i| {
            vec![-rho + 2.0 * rho * i as f64 / (sizes.covering_grid_1d - 1) as f64]
        })
        .collect();

    let side = sizes.covering_grid_side;
    let mut disc: Vec<Vec<f64>> = Vec::new();
    for i in 0..side {
        for j in 0..side {
            let x = -rho + 2.0 * rho * i as f64 / (side - 1) as f64;
            let y = -rho + 2.0 * rho * j as f64 / (side - 1) as f64;
            if (x * x + y * y).sqrt() <= rho {
                disc.push(vec![x, y]);
            }
        }
    }

    let mut worst_ratio = 0.0f64;
    let mut samples = 0;
    for (p, points) in [(1u64, &line), (2u64, &disc)] {
        for r in COVER_RADII {
            let count = greedy_cover_count(points, r) as f64;
            let bound = covering_bound(r, l_hat, c_params, p)
                .map_err(|e| CliError::Certification(e.to_string()))?;
            worst_ratio = worst_ratio.max(count / bound);
            samples += points.len();
        }
    }

    Ok(LemmaCheck::from_ratio(
        "parameter-covering",
        samples,
        worst_ratio,
        format!(
            "greedy covers of the radius-{rho} ball on {} line and {} disc points, radii {COVER_RADII:?}",
            line.len(),
            disc.len()
        ),
    ))
}

/// The softmax cross-entropy gradient has norm at most 2 and matches
/// central finite differences coordinate by coordinate.
pub fn check_softmax_gradient(sizes: &VerifySizes, seed: u64) -> Result<LemmaCheck, CliError> {
    let mut rng = SeededRng::new(seed).derive(4);
    let classes = 10;
    let fail = |e: deqcert_core::losses::LossError| CliError::Verification(e.to_string());

    let mut worst_norm = 0.0f64;
    for _ in 0..sizes.softmax_samples {
        let logits: Vec<f64> = (0..classes).map(|_| rng.uniform_in(-8.0, 8.0)).collect();
        let mut target = vec![0.0; classes];
        target[rng.index(classes)] = 1.0;
        let grad = ce_softmax_grad(&logits, &target).map_err(fail)?;
        worst_norm = worst_norm.max(norm2(&grad));
    }

    let h = 1e-6;
    let mut worst_fd = 0.0f64;
    for _ in 0..sizes.grad_samples {
        let logits: Vec<f64> = (0..classes).map(|_| rng.uniform_in(-5.0, 5.0)).collect();
        let mut target = vec![0.0; classes];
        target[rng.index(classes)] = 1.0;
        let grad = ce_softmax_grad(&logits, &target).map_err(fail)?;
        for c in 0..classes {
            let mut plus = logits.clone();
            let mut minus = logits.clone();
            plus[c] += h;
            minus[c] -= h;
            let fd = (ce_softmax_loss(&plus, &target).map_err(fail)?
                - ce_softmax_loss(&minus, &target).map_err(fail)?)
                / (2.0 * h);
            worst_fd = worst_fd.max((grad[c] - fd).abs());
        }
    }

    let worst_ratio = (worst_norm / 2.0).max(worst_fd / GRADIENT_FD_TOLERANCE);
    Ok(LemmaCheck::from_ratio(
        "softmax-gradient",
        sizes.softmax_samples + sizes.grad_samples * classes,
        worst_ratio,
        format!(
            "worst gradient norm {worst_norm:.6} (bound 2), worst finite-difference deviation {worst_fd:.2e} (tolerance {GRADIENT_FD_TOLERANCE:.0e})"
        ),
    ))
}

/// On random constant sets the Dudley integral form of the Rademacher term
/// never exceeds the closed form, under both the library quadrature and an
/// independent trapezoid rule.
pub fn check_dudley(sizes: &VerifySizes, seed: u64) -> Result<LemmaCheck, CliError> {
    let mut rng = SeededRng::new(seed).derive(5);
    let quad = QuadratureSpec::new(0.0, 1.0).with_panels(64).with_rel_tol(1e-10);
    let fail = |e: deqcert_core::bound::BoundError| CliError::Verification(e.to_string());

    let mut worst_ratio = 0.0f64;
    for _ in 0..sizes.dudley_sets {
        let l_ell = rng.uniform_in(0.5, 3.0);
        let c_out = rng.uniform_in(0.2, 5.0);
        let l_hat = rng.uniform_in(0.1, 10.0);
        let c_params = rng.uniform_in(0.5, 5.0);
        let p = 1 + rng.index(500) as u64;
        let n = 10 + rng.index(1_000_000) as u64;

        let closed = rademacher_closed(l_ell, c_out, l_hat, c_params, p, n).map_err(fail)?;
        let integral =
            rademacher_integral(l_ell, c_out, l_hat, c_params, p, n, &quad).map_err(fail)?;

        let n_f = n as f64;
        let upper = n_f.sqrt() * c_out / 2.0;
        let scale = 2.0 * l_hat * c_params;
        let p_f = p as f64;
        let oracle = 8.0 * l_ell / n_f
            * trapezoid_log_integral(|r| (p_f * (scale / r).ln_1p()).sqrt(), upper, 1e-9);

        worst_ratio = worst_ratio.max(integral / closed).max(oracle / closed);
    }

    Ok(LemmaCheck::from_ratio(
        "dudley-integral",
        sizes.dudley_sets,
        worst_ratio,
        format!(
            "{} random constant sets, library quadrature and independent trapezoid rule",
            sizes.dudley_sets
        ),
    ))
}

/// Runs every check with substreams of one seed, in a fixed order.
pub fn run_all(sizes: &VerifySizes, seed: u64) -> Result<Vec<LemmaCheck>, CliError> {
    Ok(vec![
        check_perturbation(sizes, seed)?,
        check_psi_lipschitz(sizes, seed)?,
        check_contraction(sizes, seed)?,
        check_covering(sizes, seed)?,
        check_softmax_gradient(sizes, seed)?,
        check_dudley(sizes, seed)?,
    ])
}
