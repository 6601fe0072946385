//! Realification of complex Hermitian matrices.
//!
//! `H = Re H + i Im H` maps to the real symmetric block matrix
//! `[[Re H, -Im H], [Im H, Re H]]`. The map is an injective algebra
//! homomorphism, so it preserves PSD-ness, inverses and products, each
//! eigenvalue of `H` appears twice in the embedding, and
//! `<A, H>_embedded = 2 Re tr(A H)`.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::linalg::relative_asymmetry;
use crate::{CMatrix, Error, Real, Result};

/// Embed a Hermitian matrix, rejecting inputs with relative asymmetry above
/// `1e-8`.
pub fn hermitian_embed<T: Real>(h: &CMatrix<T>) -> Result<DMatrix<T>> {
    if !h.is_square() {
        return Err(Error::LengthMismatch {
            expected: h.nrows(),
            got: h.ncols(),
        });
    }
    let asym = relative_asymmetry(h);
    if asym > crate::scalar::lit(1e-8) {
        return Err(Error::NonHermitian {
            asymmetry: nalgebra::try_convert(asym).unwrap_or(f64::NAN),
        });
    }
    Ok(embed_unchecked(h))
}

pub(crate) fn embed_unchecked<T: Real>(h: &CMatrix<T>) -> DMatrix<T> {
    let m = h.nrows();
    DMatrix::from_fn(2 * m, 2 * m, |r, c| {
        let z = h[(r % m, c % m)];
        match (r < m, c < m) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Inverse of [`hermitian_embed`]: reads `Re` from the diagonal blocks and
/// `Im` from the off-diagonal blocks, averaging the redundant copies.
pub fn hermitian_extract<T: Real>(y: &DMatrix<T>) -> Result<CMatrix<T>> {
    if !y.is_square() || y.nrows() % 2 != 0 {
        return Err(Error::LengthMismatch {
            expected: 2 * (y.nrows() / 2),
            got: y.ncols(),
        });
    }
    Ok(extract_unchecked(y))
}

pub(crate) fn extract_unchecked<T: Real>(y: &DMatrix<T>) -> CMatrix<T> {
    let m = y.nrows() / 2;
    let half = crate::scalar::lit::<T>(0.5);
    CMatrix::from_fn(m, m, |i, j| {
        let re = (y[(i, j)] + y[(i + m, j + m)]) * half;
        let im = (y[(i + m, j)] - y[(i, j + m)]) * half;
        Complex::new(re, im)
    })
}
