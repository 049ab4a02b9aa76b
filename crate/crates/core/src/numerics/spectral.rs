//! Spectral-norm estimation by power iteration on `MᵀM`.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::matrix::{dot, norm2, DenseMatrix};
use super::rng::SeededRng;
use super::NumericsError;

/// Early-stop threshold on the relative change of the singular-value
/// estimate between consecutive iterations.
pub const POWER_EARLY_STOP: f64 = 1e-12;

/// Estimates the spectral norm `‖M‖₂` by power iteration on the Gram matrix
/// `MᵀM` with a random unit start vector, returning `(sigma_max, residual)`
/// where `residual` is the last relative change of the estimate.
///
/// The Rayleigh quotient `vᵀMᵀMv = ‖Mv‖²` of a unit vector never exceeds
/// `‖M‖₂²`, so the estimate is a lower bound converging to the true norm;
/// it is nondecreasing across iterations for a fixed start vector. A zero
/// matrix returns `(0, 0)`.
pub fn power_method(
    m: &DenseMatrix,
    iters: usize,
    rng: &mut SeededRng,
) -> Result<(f64, f64), NumericsError> {
    if iters == 0 {
        return Err(NumericsError::ZeroIterations);
    }
    if !m.has_finite_entries() {
        return Err(NumericsError::NonFiniteMatrix);
    }
    if m.is_zero() {
        return Ok((0.0, 0.0));
    }

    let mut v = unit_start(m.cols(), rng);
    let mut sigma = 0.0;
    let mut residual = 1.0;
    let mut redraws = 0;
    let mut it = 0;
    while it < iters {
        it += 1;
        // g = Mᵀ(Mv); for unit v, vᵀg = ‖Mv‖² is the Rayleigh quotient.
        let w = m.matvec(&v);
        let g = m.matvec_transpose(&w);
        let lambda = dot(&v, &g).max(0.0);
        let next = lambda.sqrt();
        let gnorm = norm2(&g);
        if gnorm == 0.0 {
            // v landed in the null space of a nonzero matrix; try a fresh
            // direction a few times before giving up on improving.
            if redraws < 3 {
                redraws += 1;
                v = unit_start(m.cols(), rng);
                continue;
            }
            return Ok((sigma, residual));
        }
        residual = (next - sigma).abs() / next.max(f64::MIN_POSITIVE);
        sigma = next;
        for (vi, gi) in v.iter_mut().zip(g.iter()) {
            *vi = gi / gnorm;
        }
        if it > 1 && residual < POWER_EARLY_STOP {
            break;
        }
    }
    Ok((sigma, residual))
}

/// Largest and smallest eigenvalues of a symmetric positive semidefinite
/// matrix, via power iteration and a spectral shift: for PSD `G`,
/// `λ_min = λ_max − ‖λ_max·I − G‖₂`.
pub fn extreme_eigs_sym(
    g: &DenseMatrix,
    iters: usize,
    rng: &mut SeededRng,
) -> Result<(f64, f64), NumericsError> {
    if !g.is_square() {
        return Err(NumericsError::NotSquare { rows: g.rows(), cols: g.cols() });
    }
    // For symmetric PSD input the spectral norm is exactly λ_max.
    let (lambda_max, _) = power_method(g, iters, rng)?;
    let mut shifted = g.scale(-1.0);
    shifted.shift_diag(lambda_max);
    let (spread, _) = power_method(&shifted, iters, rng)?;
    let lambda_min = (lambda_max - spread).max(0.0);
    Ok((lambda_max, lambda_min))
}

/// Random matrix with i.i.d. standard normal direction, rescaled so the
/// Frobenius norm equals `target_norm`.
pub fn sample_on_norm_sphere(
    rows: usize,
    cols: usize,
    target_norm: f64,
    rng: &mut SeededRng,
) -> Result<DenseMatrix, NumericsError> {
    if rows == 0 || cols == 0 {
        return Err(NumericsError::EmptyShape { rows, cols });
    }
    if !(target_norm > 0.0 && target_norm.is_finite()) {
        return Err(NumericsError::BadTargetNorm(target_norm));
    }
    loop {
        let entries = rng.normal_vec(rows * cols);
        let norm = norm2(&entries);
        if norm > 0.0 {
            let scaled = entries.into_iter().map(|v| v * (target_norm / norm)).collect();
            return DenseMatrix::from_entries(rows, cols, scaled);
        }
    }
}

fn unit_start(dim: usize, rng: &mut SeededRng) -> alloc::vec::Vec<f64> {
    loop {
        let v = rng.normal_vec(dim);
        let n = norm2(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use super::*;

    #[test]
    fn identity_is_exact_after_one_iteration() {
        let m = DenseMatrix::identity(5);
        let mut rng = SeededRng::new(1);
        let (sigma, _) = power_method(&m, 100, &mut rng).unwrap();
        assert_eq!(sigma, 1.0);
    }

    #[test]
    fn diagonal_converges_to_max_entry() {
        let m = DenseMatrix::from_entries(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let mut rng = SeededRng::new(2);
        let (sigma, _) = power_method(&m, 100, &mut rng).unwrap();
        assert!((sigma - 3.0).abs() < 1e-10, "sigma = {sigma}");
    }

    #[test]
    fn zero_matrix_returns_zero() {
        let m = DenseMatrix::zeros(4, 4);
        let mut rng = SeededRng::new(3);
        assert_eq!(power_method(&m, 10, &mut rng).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn rejects_zero_iterations() {
        let m = DenseMatrix::identity(2);
        let mut rng = SeededRng::new(4);
        assert!(matches!(power_method(&m, 0, &mut rng), Err(NumericsError::ZeroIterations)));
    }

    #[test]
    fn estimate_never_exceeds_frobenius() {
        let mut rng = SeededRng::new(5);
        for trial in 0..20 {
            let m = sample_on_norm_sphere(6, 4, 1.0 + trial as f64, &mut rng).unwrap();
            let (sigma, _) = power_method(&m, 200, &mut rng).unwrap();
            assert!(sigma <= m.frobenius_norm() + 1e-12);
        }
    }

    #[test]
    fn rayleigh_estimates_are_monotone_in_iterations() {
        let mut rng = SeededRng::new(6);
        let m = sample_on_norm_sphere(8, 8, 2.0, &mut rng).unwrap();
        let mut prev = 0.0;
        for iters in 1..40 {
            // Clone the rng so every run starts from the same vector.
            let (sigma, _) = power_method(&m, iters, &mut rng.clone()).unwrap();
            assert!(sigma >= prev - 1e-15, "iters={iters}: {sigma} < {prev}");
            prev = sigma;
        }
    }

    #[test]
    fn extreme_eigs_on_diagonal_psd() {
        let g = DenseMatrix::from_entries(3, 3, vec![4.0, 0.0, 0.0, 0.0, 2.5, 0.0, 0.0, 0.0, 0.5])
            .unwrap();
        let mut rng = SeededRng::new(7);
        let (hi, lo) = extreme_eigs_sym(&g, 500, &mut rng).unwrap();
        assert!((hi - 4.0).abs() < 1e-9);
        assert!((lo - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sphere_sample_hits_target_norm() {
        let mut rng = SeededRng::new(8);
        let m = sample_on_norm_sphere(3, 3, 1.0, &mut rng).unwrap();
        assert!((m.frobenius_norm() - 1.0).abs() < 1e-12);
        let one = sample_on_norm_sphere(1, 1, 2.0, &mut rng).unwrap();
        assert!((one.entries()[0].abs() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_sample_is_reproducible() {
        let a = sample_on_norm_sphere(4, 2, 1.0, &mut SeededRng::new(9)).unwrap();
        let b = sample_on_norm_sphere(4, 2, 1.0, &mut SeededRng::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
