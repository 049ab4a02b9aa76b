//! Dense row-major `f64` matrices and the few vector helpers the solvers
//! need. Nothing here is tuned for large problems; the toolkit runs at desk
//! scale (dimensions in the tens) where straightforward loops are exact
//! enough and easy to audit.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Dense matrix with row-major storage.
///
/// Construction through [`DenseMatrix::from_entries`] (and deserialization,
/// which funnels through the same check) guarantees the invariants: nonzero
/// shape, `rows * cols` entries, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

/// Unvalidated mirror used as the deserialization gate.
#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = NumericsError;

    fn try_from(raw: RawMatrix) -> Result<Self, Self::Error> {
        DenseMatrix::from_entries(raw.rows, raw.cols, raw.entries)
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries, validating the invariants.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::EmptyShape { rows, cols });
        }
        if entries.len() != rows * cols {
            return Err(NumericsError::EntryCount { rows, cols, len: entries.len() });
        }
        for (i, &v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(NumericsError::NonFiniteEntry { row: i / cols, col: i % cols, value: v });
            }
        }
        Ok(Self { rows, cols, entries })
    }

    /// All-zero matrix. Panics on a zero dimension (programmer error).
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero matrix dimension");
        Self { rows, cols, entries: vec![0.0; rows * cols] }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entry slice.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        self.entries[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        self.entries[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        assert!(row < self.rows, "row out of bounds");
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    pub fn has_finite_entries(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    /// `M x`. Panics on a length mismatch; callers validate user-facing
    /// dimensions before reaching the kernels.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        let mut out = Vec::with_capacity(self.rows);
        for row in self.entries.chunks_exact(self.cols) {
            out.push(dot(row, x));
        }
        out
    }

    /// `M x` written into `out`, avoiding the allocation in hot loops.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        assert_eq!(out.len(), self.rows, "matvec output mismatch");
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `Mᵀ x` without materializing the transpose.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "transposed matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (row, &xi) in self.entries.chunks_exact(self.cols).zip(x.iter()) {
            for (o, &a) in out.iter_mut().zip(row.iter()) {
                *o += a * xi;
            }
        }
        out
    }

    /// `M N`. Panics on an inner-dimension mismatch.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.entries[i * self.cols + l];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.entries[l * rhs.cols..(l + 1) * rhs.cols];
                let orow = &mut out.entries[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in orow.iter_mut().zip(rrow.iter()) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.entries[c * self.rows + r] = self.entries[r * self.cols + c];
            }
        }
        out
    }

    /// Gram matrix `MᵀM` (symmetric positive semidefinite).
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for row in self.entries.chunks_exact(n) {
            for (i, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.entries[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(row.iter()) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Entrywise `self + scale * rhs`. Panics on a shape mismatch.
    pub fn add_scaled(&self, scale: f64, rhs: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        let entries = self
            .entries
            .iter()
            .zip(rhs.entries.iter())
            .map(|(&a, &b)| a + scale * b)
            .collect();
        Self { rows: self.rows, cols: self.cols, entries }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add_scaled(-1.0, rhs)
    }

    pub fn scale(&self, s: f64) -> Self {
        let entries = self.entries.iter().map(|&a| a * s).collect();
        Self { rows: self.rows, cols: self.cols, entries }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.entries {
            *v *= s;
        }
    }

    /// Adds `s` to every diagonal entry. Panics if not square.
    pub fn shift_diag(&mut self, s: f64) {
        assert!(self.is_square(), "diagonal shift needs a square matrix");
        let n = self.cols;
        for i in 0..n {
            self.entries[i * n + i] += s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.entries)
    }
}

/// Dot product; plain left-to-right accumulation keeps results bit-stable.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Euclidean norm.
#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Sum of absolute values.
#[inline]
pub fn norm1(v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &x in v {
        acc += x.abs();
    }
    acc
}

/// `‖a − b‖₂` without allocating the difference.
#[inline]
pub fn diff_norm2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_entries_validates() {
        assert!(DenseMatrix::from_entries(2, 2, vec![1.0, 2.0, 3.0, 4.0]).is_ok());
        assert!(matches!(
            DenseMatrix::from_entries(2, 2, vec![1.0; 3]),
            Err(NumericsError::EntryCount { .. })
        ));
        assert!(matches!(
            DenseMatrix::from_entries(0, 2, vec![]),
            Err(NumericsError::EmptyShape { .. })
        ));
        assert!(matches!(
            DenseMatrix::from_entries(1, 2, vec![1.0, f64::NAN]),
            Err(NumericsError::NonFiniteEntry { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn matvec_matches_hand_computation() {
        let m = DenseMatrix::from_entries(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(m.matvec_transpose(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn matmul_and_transpose_agree() {
        let a = DenseMatrix::from_entries(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::from_entries(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let ab = a.matmul(&b);
        assert_eq!(ab.entries(), &[58.0, 64.0, 139.0, 154.0]);
        let abt = b.transpose().matmul(&a.transpose());
        assert_eq!(ab.transpose().entries(), abt.entries());
    }

    #[test]
    fn gram_is_transpose_times_self() {
        let a = DenseMatrix::from_entries(3, 2, vec![1.0, 2.0, 0.5, -1.0, 3.0, 0.0]).unwrap();
        let g = a.gram();
        let explicit = a.transpose().matmul(&a);
        for (x, y) in g.entries().iter().zip(explicit.entries().iter()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn diag_shift_builds_identity_minus() {
        let mut m = DenseMatrix::identity(3).scale(-0.25);
        m.shift_diag(1.0);
        assert_eq!(m.get(0, 0), 0.75);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn norms() {
        assert_eq!(norm2(&[3.0, 4.0]), 5.0);
        assert_eq!(norm1(&[-1.0, 2.0]), 3.0);
        assert_eq!(diff_norm2(&[1.0, 1.0], &[1.0, 0.0]), 1.0);
        let m = DenseMatrix::from_entries(1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(m.frobenius_norm(), 5.0);
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let m = DenseMatrix::from_entries(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: DenseMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"rows":2,"cols":2,"entries":[1.0,2.0,3.0]}"#;
        assert!(serde_json::from_str::<DenseMatrix>(bad).is_err());
    }
}
