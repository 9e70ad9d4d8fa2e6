//! Small dense matrices, singular values and the singular value function.
//!
//! Everything downstream works with `log φᵗ` rather than `φᵗ`: products of
//! twenty contractions already sit close to the bottom of the `f32` range, and
//! partition sums over millions of words are only ever reduced in log space.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `d × d` real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    dim: usize,
    entries: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(dim: usize, entries: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: entries.len() });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        Ok(Self { dim, entries })
    }

    /// Builds a matrix from its rows.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
        }
        Self::new(dim, rows.iter().flatten().copied().collect())
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![T::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = T::one();
        }
        Self { dim, entries }
    }

    pub fn diagonal(diag: &[T]) -> Result<Self> {
        let dim = diag.len();
        let mut entries = vec![T::zero(); dim * dim];
        for (i, &v) in diag.iter().enumerate() {
            entries[i * dim + i] = v;
        }
        Self::new(dim, entries)
    }

    /// Counter-clockwise rotation by `theta`, scaled by `ratio`.
    pub fn similarity_2d(ratio: T, theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self { dim: 2, entries: vec![ratio * c, -ratio * s, ratio * s, ratio * c] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.entries[row * self.dim + col]
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                entries[j * d + i] = self.entries[i * d + j];
            }
        }
        Self { dim: d, entries }
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&x| x * factor).collect() }
    }

    /// Matrix-vector product `M x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let d = self.dim;
        (0..d).map(|i| (0..d).map(|j| self.entries[i * d + j] * x[j]).sum()).collect()
    }

    pub fn max_abs_entry(&self) -> T {
        self.entries.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> T {
        let d = self.dim;
        match d {
            1 => return self.entries[0],
            2 => {
                let e = &self.entries;
                return e[0] * e[3] - e[1] * e[2];
            }
            _ => {}
        }
        let mut a = self.entries.clone();
        let mut det = T::one();
        for col in 0..d {
            let pivot = (col..d)
                .max_by(|&i, &j| a[i * d + col].abs().partial_cmp(&a[j * d + col].abs()).expect("finite"))
                .expect("non-empty range");
            if a[pivot * d + col] == T::zero() {
                return T::zero();
            }
            if pivot != col {
                for j in 0..d {
                    a.swap(pivot * d + j, col * d + j);
                }
                det = -det;
            }
            let p = a[col * d + col];
            det = det * p;
            for i in col + 1..d {
                let f = a[i * d + col] / p;
                for j in col..d {
                    a[i * d + j] = a[i * d + j] - f * a[col * d + j];
                }
            }
        }
        det
    }

    /// Writes `self · rhs` into `out`; all three must share a dimension.
    pub(crate) fn mul_into(&self, rhs: &Self, out: &mut Self) {
        let d = self.dim;
        debug_assert_eq!(d, rhs.dim);
        debug_assert_eq!(d, out.dim);
        if d == 2 {
            let (a, b) = (&self.entries, &rhs.entries);
            out.entries[0] = a[0] * b[0] + a[1] * b[2];
            out.entries[1] = a[0] * b[1] + a[1] * b[3];
            out.entries[2] = a[2] * b[0] + a[3] * b[2];
            out.entries[3] = a[2] * b[1] + a[3] * b[3];
            return;
        }
        for i in 0..d {
            for j in 0..d {
                let mut acc = T::zero();
                for k in 0..d {
                    acc = acc + self.entries[i * d + k] * rhs.entries[k * d + j];
                }
                out.entries[i * d + j] = acc;
            }
        }
    }

    /// Rescales in place by a power of two so the largest entry is close to
    /// one, returning the natural log of the factor removed. Scaling by
    /// powers of two is exact, so no rounding is introduced.
    pub(crate) fn renormalize(&mut self) -> T {
        let big = self.max_abs_entry();
        if big == T::zero() || !big.is_finite() {
            return T::zero();
        }
        let exponent = big.log2().floor();
        if exponent == T::zero() {
            return T::zero();
        }
        let shift = exponent.to_i32().expect("exponent of a finite float");
        let factor = T::of(2.0).powi(-shift);
        for x in self.entries.iter_mut() {
            *x = *x * factor;
        }
        exponent * T::LN_2()
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[T]> = self.entries.chunks(self.dim).collect();
        f.debug_struct("Matrix").field("dim", &self.dim).field("rows", &rows).finish()
    }
}

/// Ordinary product `AB`.
pub fn matrix_product<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    let mut out = Matrix::identity(a.dim);
    a.mul_into(b, &mut out);
    Ok(out)
}

/// Singular values in non-increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum<T>(Vec<T>);

impl<T: Scalar> SingularSpectrum<T> {
    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn largest(&self) -> T {
        self.0[0]
    }

    pub fn smallest(&self) -> T {
        self.0[self.0.len() - 1]
    }
}

/// An exponent `t ∈ [0, d]` split into integer and fractional parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvfExponent<T> {
    t: T,
    whole: usize,
    frac: T,
}

impl<T: Scalar> SvfExponent<T> {
    pub fn new(t: T, dim: usize) -> Result<Self> {
        if !t.is_finite() || t < T::zero() || t > T::of_usize(dim) {
            return Err(Error::ExponentOutOfRange { t: t.to_f64_lossy(), dim });
        }
        let floor = t.floor();
        let whole = floor.to_usize().expect("non-negative floor");
        Ok(Self { t, whole, frac: t - floor })
    }

    pub fn value(&self) -> T {
        self.t
    }

    /// `log φᵗ` of a matrix whose singular values are `spectrum`.
    ///
    /// Integer `t` uses exactly `t` factors. A zero singular value that is
    /// actually needed yields `-∞`.
    pub fn log_phi_of(&self, spectrum: &[T]) -> T {
        let mut acc = T::zero();
        for &sigma in &spectrum[..self.whole] {
            acc = acc + sigma.ln();
        }
        if self.frac > T::zero() {
            acc = acc + self.frac * spectrum[self.whole].ln();
        }
        acc
    }
}

/// Singular values of `M`, non-increasing.
///
/// `d = 1` and `d = 2` use closed forms. For `d = 2` the larger value comes
/// from the trace and determinant of `MᵀM`, the smaller one as `|det M| / σ₁`,
/// which avoids the cancellation in `trace − sqrt(discriminant)`.
/// For `d ≥ 3` a one-sided (Hestenes) Jacobi iteration diagonalizes `MᵀM`
/// implicitly; sweeps stop once every column pair is orthogonal to within
/// `d · ε` relative to the product of their norms, or after 64 sweeps.
pub fn singular_values<T: Scalar>(m: &Matrix<T>) -> SingularSpectrum<T> {
    match m.dim {
        1 => SingularSpectrum(vec![m.entries[0].abs()]),
        2 => {
            let (s1, s2) = singular_values_2x2(&m.entries);
            SingularSpectrum(vec![s1, s2])
        }
        _ => SingularSpectrum(jacobi_singular_values(m)),
    }
}

pub(crate) fn singular_values_2x2<T: Scalar>(e: &[T]) -> (T, T) {
    let (a, b, c, d) = (e[0], e[1], e[2], e[3]);
    // MᵀM = [[p, q], [q, r]]
    let p = a * a + c * c;
    let q = a * b + c * d;
    let r = b * b + d * d;
    let half = T::of(0.5);
    let disc = ((p - r) * (p - r) + T::of(4.0) * q * q).sqrt();
    let s1 = (half * (p + r + disc)).sqrt();
    if s1 == T::zero() {
        return (T::zero(), T::zero());
    }
    let det = (a * d - b * c).abs();
    (s1, (det / s1).min(s1))
}

fn jacobi_singular_values<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    let d = m.dim;
    // Work on columns of M: cols[j][i] = M[i][j].
    let mut cols: Vec<Vec<T>> = (0..d).map(|j| (0..d).map(|i| m.get(i, j)).collect()).collect();
    let tol = T::of_usize(d) * T::epsilon();
    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let alpha: T = cols[p].iter().map(|&x| x * x).sum();
                let beta: T = cols[q].iter().map(|&x| x * x).sum();
                let gamma: T = cols[p].iter().zip(&cols[q]).map(|(&x, &y)| x * y).sum();
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                for i in 0..d {
                    let x = cols[p][i];
                    let y = cols[q][i];
                    cols[p][i] = cs * x - sn * y;
                    cols[q][i] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut values: Vec<T> = cols.iter().map(|c| c.iter().map(|&x| x * x).sum::<T>().sqrt()).collect();
    values.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    values
}

/// `log φᵗ(M)`; `t` must lie in `[0, d]`.
pub fn log_phi<T: Scalar>(t: T, m: &Matrix<T>) -> Result<T> {
    let exponent = SvfExponent::new(t, m.dim)?;
    Ok(log_phi_with(&exponent, m))
}

/// `log φᵗ(M)` for an already validated exponent.
pub fn log_phi_with<T: Scalar>(exponent: &SvfExponent<T>, m: &Matrix<T>) -> T {
    if exponent.whole == 0 && exponent.frac == T::zero() {
        return T::zero();
    }
    match m.dim {
        1 => exponent.log_phi_of(&[m.entries[0].abs()]),
        2 => {
            let (s1, s2) = singular_values_2x2(&m.entries);
            exponent.log_phi_of(&[s1, s2])
        }
        _ => exponent.log_phi_of(singular_values(m).values()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix<f64> {
        Matrix::new(2, vec![a, b, c, d]).unwrap()
    }

    #[test]
    fn isometries_have_unit_singular_values() {
        let id = singular_values(&Matrix::<f64>::identity(2));
        assert_eq!(id.values(), &[1.0, 1.0]);
        for k in 0..16 {
            let theta = 0.4 * k as f64;
            let s = singular_values(&Matrix::similarity_2d(1.0, theta));
            assert!((s.values()[0] - 1.0).abs() < 1e-15);
            assert!((s.values()[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_singular_values() {
        let s = singular_values(&Matrix::<f64>::diagonal(&[0.5, 1.0 / 3.0]).unwrap());
        assert!((s.values()[0] - 0.5).abs() < 1e-15);
        assert!((s.values()[1] - 1.0 / 3.0).abs() < 1e-15);
        let s = singular_values(&Matrix::<f64>::diagonal(&[-0.2, 0.7]).unwrap());
        assert!((s.values()[0] - 0.7).abs() < 1e-15);
        assert!((s.values()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn shear_matches_golden_ratio() {
        // MᵀM = [[1,1],[1,2]] has eigenvalues (3 ± √5)/2.
        let s = singular_values(&m2(1.0, 1.0, 0.0, 1.0));
        assert!((s.values()[0] - 1.618_033_988_749_895).abs() < 1e-14);
        assert!((s.values()[1] - 0.618_033_988_749_895).abs() < 1e-14);
    }

    #[test]
    fn jacobi_matches_closed_form_on_block_matrix() {
        let m = Matrix::<f64>::new(3, vec![1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.25]).unwrap();
        let s = singular_values(&m);
        assert!((s.values()[0] - 1.618_033_988_749_895).abs() < 1e-14);
        assert!((s.values()[1] - 0.618_033_988_749_895).abs() < 1e-14);
        assert!((s.values()[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_accepted() {
        let s = singular_values(&m2(0.3, 0.0, 0.0, 0.0));
        assert_eq!(s.values(), &[0.3, 0.0]);
        assert_eq!(log_phi(1.5, &m2(0.3, 0.0, 0.0, 0.0)).unwrap(), f64::NEG_INFINITY);
        assert!((log_phi(1.0, &m2(0.3, 0.0, 0.0, 0.0)).unwrap() - 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn non_finite_entries_rejected() {
        assert!(Matrix::new(2, vec![1.0, f64::NAN, 0.0, 1.0]).is_err());
        assert!(Matrix::new(2, vec![1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn log_phi_examples() {
        let d = Matrix::<f64>::diagonal(&[0.5, 1.0 / 3.0]).unwrap();
        assert_eq!(log_phi(0.0, &d).unwrap(), 0.0);
        assert!((log_phi(2.0, &d).unwrap() - (1.0f64 / 6.0).ln()).abs() < 1e-15);
        let expected = (0.5 * (1.0f64 / 3.0).sqrt()).ln();
        assert!((log_phi(1.5, &d).unwrap() - expected).abs() < 1e-15);
        assert!((log_phi(1.5, &d).unwrap() - 0.288_675_134_594_812_9f64.ln()).abs() < 1e-12);
        assert!(log_phi(2.5, &d).is_err());
        assert!(log_phi(-0.1, &d).is_err());
    }

    #[test]
    fn matrix_product_examples() {
        let a = m2(1.0, 2.0, 3.0, 4.0);
        assert_eq!(matrix_product(&a, &Matrix::identity(2)).unwrap(), a);
        let p = matrix_product(
            &Matrix::<f64>::diagonal(&[2.0, 3.0]).unwrap(),
            &Matrix::<f64>::diagonal(&[5.0, 7.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(p, Matrix::<f64>::diagonal(&[10.0, 21.0]).unwrap());
        let swap = m2(0.0, 1.0, 1.0, 0.0);
        assert_eq!(matrix_product(&swap, &swap).unwrap(), Matrix::identity(2));
        assert!(matrix_product(&swap, &Matrix::identity(3)).is_err());
    }

    #[test]
    fn renormalize_is_exact() {
        let mut m = m2(3.0e-20, 1.0e-21, -2.0e-20, 5.0e-21);
        let orig = m.clone();
        let log_scale = m.renormalize();
        let back = m.scaled(log_scale.exp());
        for (x, y) in back.entries().iter().zip(orig.entries()) {
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1e-21));
        }
        assert!(m.max_abs_entry() >= 0.5 && m.max_abs_entry() < 4.0);
    }

    #[test]
    fn determinant_general() {
        let m = Matrix::<f64>::new(3, vec![2.0, 0.0, 1.0, 1.0, 3.0, 0.0, 0.0, 1.0, 4.0]).unwrap();
        assert!((m.determinant() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn single_precision_path() {
        let s = singular_values(&Matrix::<f32>::new(2, vec![1.0, 1.0, 0.0, 1.0]).unwrap());
        assert!((s.values()[0] - 1.618_034).abs() < 1e-6);
        let d = Matrix::<f32>::diagonal(&[0.5, 0.25]).unwrap();
        assert!((log_phi(1.5f32, &d).unwrap() - (0.5f32 * 0.5).ln()).abs() < 1e-6);
    }
}
