//! Cyclic Jacobi eigenvalue iteration for symmetric matrices.
//!
//! Classical two-sided rotations; quadratically convergent and accurate to
//! machine precision for the desk-scale orders (n <= 50) the tests use.

/// Eigenvalues of a symmetric matrix given as a row-major slice of length
/// `n*n`, sorted ascending.
///
/// Panics if the slice length disagrees with `n` or the matrix is not
/// (numerically) symmetric.
pub fn jacobi_eigenvalues(sym: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(sym.len(), n * n, "matrix slice length mismatch");
    let scale = sym.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    for r in 0..n {
        for c in (r + 1)..n {
            let skew = (sym[r * n + c] - sym[c * n + r]).abs();
            assert!(skew <= 1e-9 * scale.max(1.0), "matrix is not symmetric at ({r}, {c})");
        }
    }

    let mut a = sym.to_vec();
    // Symmetrize exactly so rotations preserve symmetry bit-for-bit.
    for r in 0..n {
        for c in (r + 1)..n {
            let m = 0.5 * (a[r * n + c] + a[c * n + r]);
            a[r * n + c] = m;
            a[c * n + r] = m;
        }
    }

    const MAX_SWEEPS: usize = 64;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for r in 0..n {
            for c in (r + 1)..n {
                off = off.max(a[r * n + c].abs());
            }
        }
        if off <= 1e-14 * scale.max(1.0) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // Rotation angle from the standard Jacobi formulas.
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }

    let mut eigs: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eigs.sort_by(|x, y| x.total_cmp(y));
    eigs
}

/// Spectral norm of a general `rows x cols` matrix via Jacobi on its Gram
/// matrix, formed with plain scalar loops.
pub fn spectral_norm_jacobi(matrix: &[f64], rows: usize, cols: usize) -> f64 {
    assert_eq!(matrix.len(), rows * cols, "matrix slice length mismatch");
    let mut gram = vec![0.0f64; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += matrix[r * cols + i] * matrix[r * cols + j];
            }
            gram[i * cols + j] = acc;
        }
    }
    let eigs = jacobi_eigenvalues(&gram, cols);
    eigs.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}
