use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use nalgebra::{DMatrix, DVector};

use super::{hermitian_asymmetry, is_hermitian, ComplexMatrix, HERMITIAN_TOL, PSD_CLIP};
use crate::error::{Error, Result};

/// Thin singular value decomposition `M = U diag(S) V^dagger`.
///
/// `u` is `m x k` and `v` is `n x k` with `k = min(m, n)`; for the tall
/// measurement matrices used here (`m >= s^2`) `v` is the full square
/// unitary. Singular values are sorted in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub singular_values: DVector<f64>,
    pub v: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.adjoint()
    }

    /// Number of singular values above `tol * s_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let smax = self.singular_values.iter().copied().fold(0.0, f64::max);
        if smax == 0.0 {
            return 0;
        }
        self.singular_values.iter().filter(|s| **s > tol * smax).count()
    }
}

pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericFailure {
            routine: "svd",
            detail: "non-finite entry".into(),
        });
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("svd of an empty matrix".into()));
    }
    let fm = to_faer(m);
    let dec = fm.thin_svd().map_err(|e| Error::NumericFailure {
        routine: "svd",
        detail: format!("{e:?} on a {rows}x{cols} matrix"),
    })?;
    let k = rows.min(cols);
    let s = dec.S().column_vector();
    Ok(Svd {
        u: from_faer(dec.U()),
        singular_values: DVector::from_fn(k, |i, _| s[i].re),
        v: from_faer(dec.V()),
    })
}

fn to_faer(m: &ComplexMatrix) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, Complex64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map_reconstruct(|w| w)
    }

    /// `V f(diag(w)) V^dagger`.
    pub fn map_reconstruct(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let mut vw = self.eigenvectors.clone();
        for (j, w) in self.eigenvalues.iter().enumerate() {
            vw.column_mut(j).scale_mut(f(*w));
        }
        vw * self.eigenvectors.adjoint()
    }
}

pub fn eigh(h: &ComplexMatrix) -> Result<HermitianEig> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            got: h.ncols(),
        });
    }
    if !is_hermitian(h, HERMITIAN_TOL) {
        return Err(Error::NotHermitian {
            asymmetry: hermitian_asymmetry(h),
        });
    }
    let sym = to_faer(&super::hermitize(h));
    let n = h.nrows();
    let dec = sym.self_adjoint_eigen(Side::Lower).map_err(|e| Error::NumericFailure {
        routine: "eigh",
        detail: format!("{e:?} on a {n}x{n} matrix"),
    })?;
    let w = dec.S().column_vector();
    Ok(HermitianEig {
        eigenvalues: DVector::from_fn(n, |i, _| w[i].re),
        eigenvectors: from_faer(dec.U()),
    })
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending;
/// eigenvectors are the columns of the returned matrix.
pub fn eigh_real(h: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.ncols() });
    }
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
    let dec = sym.self_adjoint_eigen(Side::Lower).map_err(|e| Error::NumericFailure {
        routine: "eigh_real",
        detail: format!("{e:?} on a {n}x{n} matrix"),
    })?;
    let w = dec.S().column_vector();
    let u = dec.U();
    Ok((DVector::from_fn(n, |i, _| w[i]), DMatrix::from_fn(n, n, |i, j| u[(i, j)])))
}

/// Principal square root of a Hermitian PSD matrix.
pub fn sqrtm_psd(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = eigh(h)?;
    let scale = h.norm().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -PSD_CLIP * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(eig.map_reconstruct(|w| w.max(0.0).sqrt()))
}

/// Moore-Penrose pseudo-inverse; singular values below `tol * s_max` are
/// treated as zero.
pub fn pinv(m: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    if tol < 0.0 {
        return Err(Error::InvalidArgument(format!("pinv tolerance {tol} < 0")));
    }
    let dec = svd(m)?;
    let smax = dec.singular_values.iter().copied().fold(0.0, f64::max);
    let mut v = dec.v.clone();
    for (j, s) in dec.singular_values.iter().enumerate() {
        let inv = if *s > tol * smax && *s > 0.0 { 1.0 / s } else { 0.0 };
        v.column_mut(j).scale_mut(inv);
    }
    Ok(v * dec.u.adjoint())
}
