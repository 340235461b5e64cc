//! Small dense linear algebra: a semidefinite-tolerant Cholesky factor and 2×2 helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Diagonal jitter schedule; the first attempt uses none.
const JITTER_SCHEDULE: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Lower-triangular factor `L` (row-major, `n × n`) with `L Lᵀ = A + εI`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    n: usize,
    lower: Vec<T>,
    jitter: f64,
}

impl<T: Scalar> CholeskyFactor<T> {
    /// Factorizes a symmetric positive semidefinite matrix.
    ///
    /// Pivots that vanish to within `64·n·ε·max diag` are taken as exact zeros so
    /// duplicated rows factor without jitter.
    /// Negative pivots beyond that trigger jitter escalation up to 1e-6.
    pub fn new(a: &[T], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Shape(format!(
                "expected {}×{} matrix, got {} entries",
                n,
                n,
                a.len()
            )));
        }
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(T::zero(), T::max);
        let tol = T::lit(64.0) * T::from_usize_lossy(n.max(1)) * T::epsilon() * max_diag.max(T::one());
        for &jitter in &JITTER_SCHEDULE {
            if let Some(lower) = Self::try_factor(a, n, T::lit(jitter), tol) {
                return Ok(CholeskyFactor { n, lower, jitter });
            }
        }
        Err(Error::Numerical(format!(
            "covariance factorization failed after jitter {:e}",
            JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1]
        )))
    }

    fn try_factor(a: &[T], n: usize, jitter: T, tol: T) -> Option<Vec<T>> {
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j * n + j] + jitter;
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if d < -tol || !d.is_finite() {
                return None;
            }
            let pivot = if d <= tol { T::zero() } else { d.sqrt() };
            l[j * n + j] = pivot;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = if pivot > T::zero() { s / pivot } else { T::zero() };
            }
        }
        Some(l)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Computes `L · z` into `out`.
    #[inline]
    pub fn mul_vec(&self, z: &[T], out: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i + 1];
            out[i] = row.iter().zip(z).fold(T::zero(), |acc, (&l, &v)| acc + l * v);
        }
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }
}

/// Inverse of a small dense `n × n` matrix by Gauss-Jordan elimination with partial pivoting.
pub fn invert_dense<T: Scalar>(a: &[T], n: usize) -> Result<Vec<T>> {
    if a.len() != n * n {
        return Err(Error::Shape(format!("expected {n}×{n} matrix")));
    }
    let scale = a.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let mut work = a.to_vec();
    let mut inv = vec![T::zero(); n * n];
    for i in 0..n {
        inv[i * n + i] = T::one();
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| {
                work[r * n + col]
                    .abs()
                    .partial_cmp(&work[s * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        let pivot = work[pivot_row * n + col];
        if !(pivot.abs() > scale * T::epsilon() * T::lit(16.0)) {
            return Err(Error::Numerical(format!(
                "singular matrix: pivot {pivot:e} in column {col}"
            )));
        }
        if pivot_row != col {
            for k in 0..n {
                work.swap(col * n + k, pivot_row * n + k);
                inv.swap(col * n + k, pivot_row * n + k);
            }
        }
        for k in 0..n {
            work[col * n + k] = work[col * n + k] / pivot;
            inv[col * n + k] = inv[col * n + k] / pivot;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work[r * n + col];
            if factor == T::zero() {
                continue;
            }
            for k in 0..n {
                work[r * n + k] = work[r * n + k] - factor * work[col * n + k];
                inv[r * n + k] = inv[r * n + k] - factor * inv[col * n + k];
            }
        }
    }
    Ok(inv)
}

/// Symmetric-or-not 2×2 matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Mat2<T: Scalar>(pub [[T; 2]; 2]);

impl<T: Scalar> Mat2<T> {
    pub fn zero() -> Self {
        Mat2([[T::zero(); 2]; 2])
    }

    pub fn outer(v: [T; 2]) -> Self {
        Mat2([[v[0] * v[0], v[0] * v[1]], [v[1] * v[0], v[1] * v[1]]])
    }

    pub fn det(&self) -> T {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1]
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }

    pub fn scale(&self, s: T) -> Self {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[T::zero(); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> [T; 2] {
        let m = &self.0;
        let off = (m[0][1] + m[1][0]) * T::lit(0.5);
        let mean = (m[0][0] + m[1][1]) * T::lit(0.5);
        let half_diff = (m[0][0] - m[1][1]) * T::lit(0.5);
        let r = (half_diff * half_diff + off * off).sqrt();
        [mean - r, mean + r]
    }

    /// 2-norm condition number of the symmetric part.
    pub fn condition(&self) -> T {
        let [lo, hi] = self.sym_eigenvalues();
        let (lo, hi) = (lo.abs().min(hi.abs()), lo.abs().max(hi.abs()));
        if lo == T::zero() {
            T::infinity()
        } else {
            hi / lo
        }
    }

    /// Inverse, refusing matrices whose condition number exceeds `1/(1e3·ε)`.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        let cond = self.condition();
        if det == T::zero() || !det.is_finite() || !(cond < T::one() / (T::lit(1e3) * T::epsilon())) {
            return Err(Error::Numerical(format!(
                "singular 2×2 matrix (condition estimate {cond:e})"
            )));
        }
        let m = &self.0;
        Ok(Mat2([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]))
    }

    pub fn asymmetry(&self) -> T {
        (self.0[0][1] - self.0[1][0]).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs_spd_matrix() {
        let a = [4.0, 2.0, 0.4, 2.0, 3.0, 0.5, 0.4, 0.5, 1.0];
        let f = CholeskyFactor::<f64>::new(&a, 3).unwrap();
        let l = f.lower();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn duplicated_rows_give_matching_factor_rows() {
        let a = [1.0, 0.3, 0.3, 0.3, 1.0, 1.0, 0.3, 1.0, 1.0];
        let f = CholeskyFactor::<f64>::new(&a, 3).unwrap();
        let z = [0.7, -1.2, 2.0];
        let mut out = [0.0; 3];
        f.mul_vec(&z, &mut out);
        assert!((out[1] - out[2]).abs() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(matches!(CholeskyFactor::<f64>::new(&a, 2), Err(Error::Numerical(_))));
    }

    #[test]
    fn dense_inverse_roundtrip() {
        let a = [4.0, 1.0, 0.5, 0.0, 1.0, 3.0, 0.2, 0.1, 0.5, 0.2, 2.0, 0.3, 0.0, 0.1, 0.3, 1.0];
        let inv = invert_dense(&a, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let s: f64 = (0..4).map(|k| a[i * 4 + k] * inv[k * 4 + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12);
            }
        }
        assert!(invert_dense(&[1.0, 2.0, 2.0, 4.0], 2).is_err());
    }

    #[test]
    fn mat2_inverse_and_eigen() {
        let m = Mat2([[2.0f64, 1.0], [1.0, 3.0]]);
        let inv = m.inverse().unwrap();
        let id = m.mul(&inv);
        assert!((id.0[0][0] - 1.0).abs() < 1e-14 && id.0[0][1].abs() < 1e-14);
        let [lo, hi] = m.sym_eigenvalues();
        assert!((lo + hi - 5.0).abs() < 1e-14 && (lo * hi - 5.0).abs() < 1e-12);
        assert!(Mat2([[1.0, 1.0], [1.0, 1.0]]).inverse().is_err());
    }
}
