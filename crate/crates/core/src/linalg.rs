//! Small dense helpers for complex Hermitian matrices.

use nalgebra::SymmetricEigen;
use num_complex::Complex;

use crate::scalar::lit;
use crate::{CMatrix, CVector, Error, Real, Result};

/// Real part of `v^H X v`.
pub fn quad_form<T: Real>(x: &CMatrix<T>, v: &CVector<T>) -> T {
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..v.len() {
        let mut row = Complex::new(T::zero(), T::zero());
        for j in 0..v.len() {
            row += x[(i, j)] * v[j];
        }
        acc += v[i].conj() * row;
    }
    acc.re
}

/// `v v^H`.
pub fn outer<T: Real>(v: &CVector<T>) -> CMatrix<T> {
    let n = v.len();
    CMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

pub fn trace_re<T: Real>(x: &CMatrix<T>) -> T {
    (0..x.nrows()).fold(T::zero(), |acc, i| acc + x[(i, i)].re)
}

pub fn frobenius<T: Real>(x: &CMatrix<T>) -> T {
    x.iter()
        .fold(T::zero(), |acc, z| acc + z.norm_sqr())
        .sqrt()
}

/// `||X - X^H||_F / ||X||_F`, zero for the zero matrix.
pub fn relative_asymmetry<T: Real>(x: &CMatrix<T>) -> T {
    let scale = frobenius(x);
    if scale == T::zero() {
        return T::zero();
    }
    frobenius(&(x - x.adjoint())) / scale
}

/// `(X + X^H) / 2`.
pub fn hermitian_part<T: Real>(x: &CMatrix<T>) -> CMatrix<T> {
    let half = Complex::new(lit::<T>(0.5), T::zero());
    (x + x.adjoint()) * half
}

/// Symmetrize `x`, rejecting inputs whose relative asymmetry exceeds `tol`.
pub fn symmetrize_checked<T: Real>(x: &CMatrix<T>, tol: f64) -> Result<CMatrix<T>> {
    if !x.is_square() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: x.ncols(),
        });
    }
    let asym = relative_asymmetry(x);
    if asym > lit(tol) {
        return Err(Error::NonHermitian {
            asymmetry: nalgebra::try_convert(asym).unwrap_or(f64::NAN),
        });
    }
    Ok(hermitian_part(x))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn eigenvalues<T: Real>(x: &CMatrix<T>) -> Vec<T> {
    let eig = SymmetricEigen::new(hermitian_part(x));
    let mut vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    vals
}

pub fn min_eigenvalue<T: Real>(x: &CMatrix<T>) -> T {
    eigenvalues(x).first().copied().unwrap_or_else(T::zero)
}

/// PSD test with tolerance relative to the trace.
pub fn is_psd<T: Real>(x: &CMatrix<T>, rel_tol: f64) -> bool {
    let tr = trace_re(x).abs();
    min_eigenvalue(x) >= -(lit::<T>(rel_tol) * tr)
}

/// `lambda_2 / lambda_1` of a PSD matrix (zero for rank <= 1).
pub fn second_to_first_eig_ratio<T: Real>(x: &CMatrix<T>) -> T {
    let vals = eigenvalues(x);
    let n = vals.len();
    if n < 2 {
        return T::zero();
    }
    let top = vals[n - 1];
    if top <= T::zero() {
        return T::zero();
    }
    vals[n - 2].max(T::zero()) / top
}

pub fn zeros<T: Real>(m: usize) -> CMatrix<T> {
    CMatrix::from_element(m, m, Complex::new(T::zero(), T::zero()))
}

pub fn identity<T: Real>(m: usize) -> CMatrix<T> {
    CMatrix::from_fn(m, m, |i, j| {
        if i == j {
            Complex::new(T::one(), T::zero())
        } else {
            Complex::new(T::zero(), T::zero())
        }
    })
}

pub fn scale<T: Real>(x: &CMatrix<T>, s: T) -> CMatrix<T> {
    x * Complex::new(s, T::zero())
}

pub fn vec_norm<T: Real>(v: &CVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ComplexMatrix, ComplexVector, Complex64};

    #[test]
    fn quad_form_of_identity_is_squared_norm() {
        let v = ComplexVector::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.0)]);
        let q = quad_form(&identity::<f64>(2), &v);
        assert!((q - 5.25).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut x = identity::<f64>(2);
        x[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(symmetrize_checked(&x, 1e-8), Err(Error::NonHermitian { .. })));
        let mut y: ComplexMatrix = identity(2);
        y[(0, 1)] = Complex64::new(0.0, 1.0);
        y[(1, 0)] = Complex64::new(0.0, -1.0);
        assert!(symmetrize_checked(&y, 1e-8).is_ok());
    }

    #[test]
    fn eig_ratio_of_outer_product_vanishes() {
        let v = ComplexVector::from_vec(vec![Complex64::new(1.0, 1.0), Complex64::new(0.3, -2.0)]);
        assert!(second_to_first_eig_ratio(&outer(&v)) < 1e-14);
    }
}
