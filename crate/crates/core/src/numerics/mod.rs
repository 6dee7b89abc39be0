//! Dense complex linear algebra and the few special functions the rest of
//! the crate needs.
//!
//! Decompositions are backed by `nalgebra`; this module fixes the
//! conventions (ordering, tolerances, vectorization) on top of it.

mod linalg;
mod stats;

pub use linalg::{eigh, eigh_real, pinv, sqrtm_psd, svd, HermitianEig, Svd};
pub use stats::{chi2_cdf, chi2_sf, ks_one_sample, ks_two_sample, kolmogorov_sf, KsResult};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Relative threshold under which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Eigenvalues in `(-PSD_CLIP, 0)` are treated as rounding noise.
pub const PSD_CLIP: f64 = 1e-8;

pub(crate) const HERMITIAN_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest `|h_ij - conj(h_ji)|`.
pub fn hermitian_asymmetry(h: &ComplexMatrix) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(h: &ComplexMatrix, tol: f64) -> bool {
    h.is_square() && hermitian_asymmetry(h) <= tol * h.norm().max(1.0)
}

/// `(h + h^dagger) / 2`.
pub fn hermitize(h: &ComplexMatrix) -> ComplexMatrix {
    (h + h.adjoint()).scale(0.5)
}

pub fn trace(h: &ComplexMatrix) -> Complex64 {
    h.diagonal().iter().sum()
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Column-stacking vectorization: the second column lies below the first.
pub fn vec_columns(m: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_columns`] for a square `s x s` matrix.
pub fn devec(v: &ComplexVector, s: usize) -> ComplexMatrix {
    assert_eq!(v.len(), s * s, "devec: length is not s^2");
    ComplexMatrix::from_column_slice(s, s, v.as_slice())
}

pub fn identity(s: usize) -> ComplexMatrix {
    ComplexMatrix::identity(s, s)
}

/// Outer product `x^dagger x` of a row vector given as a slice.
pub fn row_outer(row: &[Complex64]) -> ComplexMatrix {
    let s = row.len();
    ComplexMatrix::from_fn(s, s, |a, b| row[a].conj() * row[b])
}

/// SplitMix64 finalizer; used to derive independent child seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f` on a pool of `workers` threads; `0` uses the global pool.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> crate::Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(f))
}
