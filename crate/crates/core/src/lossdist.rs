//! Asymptotic distribution of the fidelity loss.
//!
//! For large samples `1 - F ≈ Σ_j d_j ξ_j^2` with independent standard
//! normal `ξ_j`. The coefficients `d` are the nonzero eigenvalues of
//! `Σ^{1/2} A Σ^{1/2}`, where `Σ` inverts the Poisson Fisher information of
//! the purification parameters and `A` is half the Hessian of `1 - F`.
//! Both act on the real vector `θ = (Re c, Im c)`, stored column-major for
//! `c`, with the gauge directions `c ↦ c (iH)` removed.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{self, ComplexMatrix, RANK_TOL};
use crate::protocol::{self, InstrumentalMatrix};
use crate::states::{self, DensityMatrix, Purification};

/// Rows with `λ_j` below this fraction of the largest intensity are
/// treated as exact zeros.
pub const BOUNDARY_TOL: f64 = 1e-20;

/// Rows of the Fisher information accumulated per block.
const FISHER_BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCoefficients {
    /// Descending, length `(2s - r) r - 1`.
    pub d: Vec<f64>,
    pub n: f64,
    pub s: usize,
    pub r: usize,
}

impl LossCoefficients {
    pub fn j_max(&self) -> usize {
        self.d.len()
    }

    pub fn scaled_loss(&self) -> f64 {
        scaled_loss(&self.d, self.n)
    }

    pub fn summary(&self) -> Result<DistributionSummary> {
        Ok(DistributionSummary {
            l: self.scaled_loss(),
            mean: mean_loss(&self.d),
            variance: variance_loss(&self.d),
            skewness: skewness(&self.d).ok(),
            excess: excess(&self.d).ok(),
            j_max: self.j_max(),
            n: self.n,
            bounds: Bounds {
                optimal_min: optimal_min_loss(self.s, self.r)?,
                polyhedron_mixed_min: if self.r == self.s && self.s.is_power_of_two() {
                    Some(polyhedron_mixed_min(self.s.trailing_zeros() as usize))
                } else {
                    None
                },
            },
        })
    }

    /// CSV with columns `index,d`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,d\n");
        for (j, d) in self.d.iter().enumerate() {
            out.push_str(&format!("{j},{d:.16e}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Bounds {
    pub optimal_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polyhedron_mixed_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistributionSummary {
    #[serde(rename = "L")]
    pub l: f64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: Option<f64>,
    pub excess: Option<f64>,
    pub j_max: usize,
    pub n: f64,
    pub bounds: Bounds,
}

fn theta_len(s: usize, r: usize) -> usize {
    2 * s * r
}

/// `θ` index of the real part of `c[(a, k)]`; the imaginary part sits `s r`
/// further on.
fn theta_index(s: usize, a: usize, k: usize) -> usize {
    a + s * k
}

pub fn theta_to_matrix(theta: &[f64], s: usize, r: usize) -> ComplexMatrix {
    let half = s * r;
    ComplexMatrix::from_fn(s, r, |a, k| {
        let i = theta_index(s, a, k);
        Complex64::new(theta[i], theta[half + i])
    })
}

pub fn matrix_to_theta(c: &ComplexMatrix) -> Vec<f64> {
    let (s, r) = c.shape();
    let half = s * r;
    let mut theta = vec![0.0; 2 * half];
    for k in 0..r {
        for a in 0..s {
            let i = theta_index(s, a, k);
            theta[i] = c[(a, k)].re;
            theta[half + i] = c[(a, k)].im;
        }
    }
    theta
}

/// Poisson Fisher information `Σ_j (t_j / λ_j) g_j g_j^T` of the
/// parameters `θ` at the purification `c0`.
pub fn fisher_information(p: &InstrumentalMatrix, c0: &Purification) -> Result<DMatrix<f64>> {
    let (s, r) = (c0.dim(), c0.rank());
    if p.dim() != s {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: s });
    }
    let dim = theta_len(s, r);
    let half = s * r;
    let x = p.matrix();
    let y = x * c0.matrix();
    let lambda: Vec<f64> = (0..p.rows()).map(|j| y.row(j).iter().map(|z| z.norm_sqr()).sum()).collect();
    let lmax = lambda.iter().cloned().fold(0.0, f64::max);
    if let Some(row) = lambda.iter().position(|l| *l <= BOUNDARY_TOL * lmax) {
        return Err(Error::BoundaryState { row });
    }
    let mut info = DMatrix::<f64>::zeros(dim, dim);
    for start in (0..p.rows()).step_by(FISHER_BLOCK) {
        let end = (start + FISHER_BLOCK).min(p.rows());
        let mut g = DMatrix::<f64>::zeros(end - start, dim);
        for j in start..end {
            let w = (p.times()[j] / lambda[j]).sqrt();
            for k in 0..r {
                let yk = y[(j, k)].conj();
                for a in 0..s {
                    let z = yk * x[(j, a)];
                    let i = theta_index(s, a, k);
                    g[(j - start, i)] = 2.0 * z.re * w;
                    g[(j - start, half + i)] = -2.0 * z.im * w;
                }
            }
        }
        info += g.transpose() * &g;
    }
    Ok(info)
}

/// Orthonormal basis (as columns) of the complement of the gauge
/// directions `c0 (iH)`, `H` Hermitian.
pub fn gauge_complement(c0: &Purification) -> Result<DMatrix<f64>> {
    let (s, r) = (c0.dim(), c0.rank());
    let dim = theta_len(s, r);
    let c = c0.matrix();
    let mut gauge = DMatrix::<f64>::zeros(dim, r * r);
    let mut col = 0;
    let mut push = |h: ComplexMatrix| {
        let t = matrix_to_theta(&(c * h * Complex64::new(0.0, 1.0)));
        gauge.column_mut(col).copy_from_slice(&t);
        col += 1;
    };
    for k in 0..r {
        for l in k..r {
            let mut h = ComplexMatrix::zeros(r, r);
            if k == l {
                h[(k, k)] = Complex64::new(1.0, 0.0);
                push(h);
            } else {
                h[(k, l)] = Complex64::new(1.0, 0.0);
                h[(l, k)] = Complex64::new(1.0, 0.0);
                push(h.clone());
                h[(k, l)] = Complex64::new(0.0, 1.0);
                h[(l, k)] = Complex64::new(0.0, -1.0);
                push(h);
            }
        }
    }
    let (w, v) = numerics::eigh_real(&(&gauge * gauge.transpose()))?;
    let keep = dim - r * r;
    let wmax = w[dim - 1].max(f64::MIN_POSITIVE);
    if w[keep] <= 1e-8 * wmax || (keep > 0 && w[keep - 1] > 1e-8 * wmax) {
        return Err(Error::NumericFailure {
            routine: "gauge_complement",
            detail: "gauge directions are not independent".into(),
        });
    }
    Ok(v.columns(0, keep).into_owned())
}

/// Matrix `A` of the quadratic form `1 - F(c0, c0 + δ) ≈ θ^T A θ`.
///
/// With `E = c0^† δ`, `K = (E - E^†)/(2i)` and `c0^† c0 = diag(p)`,
/// `1 - F ≈ ||δ||^2 - (Re tr E)^2 - 2 Σ_ij |K_ij|^2 / (p_i + p_j)`.
pub fn loss_hessian(c0: &Purification) -> Result<DMatrix<f64>> {
    let (s, r) = (c0.dim(), c0.rank());
    let dim = theta_len(s, r);
    let half = s * r;
    let c = c0.matrix();
    let gram = c.adjoint() * c;
    let p: Vec<f64> = (0..r).map(|k| gram[(k, k)].re).collect();
    let off: f64 = (0..r)
        .flat_map(|i| (0..r).filter(move |j| *j != i).map(move |j| (i, j)))
        .map(|(i, j)| gram[(i, j)].norm())
        .fold(0.0, f64::max);
    if off > 1e-10 || p.iter().any(|x| *x <= 0.0) {
        return Err(Error::InvalidArgument("purification columns must be orthogonal and nonzero".into()));
    }
    // One row per linear functional of θ in the subtracted sum of squares.
    let mut phi = DMatrix::<f64>::zeros(1 + 2 * r * r, dim);
    for k in 0..r {
        for a in 0..s {
            let ia = theta_index(s, a, k);
            for (offset, z) in [(0, Complex64::new(1.0, 0.0)), (half, Complex64::new(0.0, 1.0))] {
                let col = ia + offset;
                // δ = z e_a e_k^T, so E[(i, k)] = conj(c[(a, i)]) z.
                let e = |i: usize, j: usize| if j == k { c[(a, i)].conj() * z } else { Complex64::new(0.0, 0.0) };
                phi[(0, col)] = e(k, k).re;
                for i in 0..r {
                    for j in 0..r {
                        let kij = (e(i, j) - e(j, i).conj()) / Complex64::new(0.0, 2.0);
                        let w = (2.0 / (p[i] + p[j])).sqrt();
                        let row = 1 + 2 * (i * r + j);
                        phi[(row, col)] = w * kij.re;
                        phi[(row + 1, col)] = w * kij.im;
                    }
                }
            }
        }
    }
    Ok(DMatrix::<f64>::identity(dim, dim) - phi.transpose() * phi)
}

/// Half the Hessian of `1 - F` at `c0` in `θ` coordinates by central
/// differences of the Uhlmann fidelity with step `h`.
pub fn loss_hessian_fd(c0: &Purification, h: f64) -> Result<DMatrix<f64>> {
    let (s, r) = (c0.dim(), c0.rank());
    let dim = theta_len(s, r);
    let base = matrix_to_theta(c0.matrix());
    let loss = |steps: &[(usize, f64)]| -> Result<f64> {
        let mut t = base.clone();
        for (i, dx) in steps {
            t[*i] += dx;
        }
        let c = Purification::normalized(theta_to_matrix(&t, s, r))?;
        Ok(1.0 - states::uhlmann_fidelity(c0, &c)?)
    };
    let g0 = loss(&[])?;
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    for a in 0..dim {
        hess[(a, a)] = (loss(&[(a, h)])? - 2.0 * g0 + loss(&[(a, -h)])?) / (h * h);
        for b in 0..a {
            let v = (loss(&[(a, h), (b, h)])? - loss(&[(a, h), (b, -h)])? - loss(&[(a, -h), (b, h)])?
                + loss(&[(a, -h), (b, -h)])?)
                / (4.0 * h * h);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    Ok(hess * 0.5)
}

/// Eigenvalues of `Σ^{1/2} A Σ^{1/2}` with `Σ = F^{-1}` on the span of
/// `basis`, descending.
fn generalized_eigenvalues(fisher: &DMatrix<f64>, a: &DMatrix<f64>, basis: &DMatrix<f64>) -> Result<Vec<f64>> {
    let fm = basis.transpose() * fisher * basis;
    let am = basis.transpose() * a * basis;
    let chol = Cholesky::new(fm).ok_or_else(|| Error::NumericFailure {
        routine: "loss_coefficients",
        detail: "Fisher information is singular off the gauge directions".into(),
    })?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&am)
        .ok_or_else(|| Error::NumericFailure { routine: "loss_coefficients", detail: "triangular solve".into() })?;
    let m = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::NumericFailure { routine: "loss_coefficients", detail: "triangular solve".into() })?;
    let m = (&m + m.transpose()) * 0.5;
    let (w, _) = numerics::eigh_real(&m)?;
    let mut d: Vec<f64> = w.iter().rev().cloned().collect();
    for x in &mut d {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    Ok(d)
}

/// Coefficients of the loss distribution for the true state `rho0`
/// fitted at rank `r` from a sample of total size `n`.
pub fn loss_coefficients(p: &InstrumentalMatrix, rho0: &DensityMatrix, r: usize, n: f64) -> Result<LossCoefficients> {
    let s = p.dim();
    if rho0.dim() != s {
        return Err(Error::DimensionMismatch { expected: s, got: rho0.dim() });
    }
    let actual = states::infer_rank(rho0);
    if actual > r {
        return Err(Error::RankDeficit { requested: r, actual });
    }
    if actual < r {
        return Err(Error::InvalidArgument(format!(
            "state has rank {actual}; the rank-{r} model is singular there"
        )));
    }
    let timed = protocol::scale_times_for_sample(p, rho0, n)?;
    let c0 = states::purify(rho0, r)?;
    let fisher = fisher_information(&timed, &c0)?;
    let a = loss_hessian(&c0)?;
    let basis = gauge_complement(&c0)?;
    let mut d = generalized_eigenvalues(&fisher, &a, &basis)?;
    d.truncate(j_max(s, r));
    Ok(LossCoefficients { d, n, s, r })
}

pub fn j_max(s: usize, r: usize) -> usize {
    (2 * s - r) * r - 1
}

pub fn mean_loss(d: &[f64]) -> f64 {
    d.iter().sum()
}

pub fn variance_loss(d: &[f64]) -> f64 {
    2.0 * d.iter().map(|x| x * x).sum::<f64>()
}

pub fn skewness(d: &[f64]) -> Result<f64> {
    let sigma = variance_loss(d).sqrt();
    if sigma == 0.0 {
        return Err(Error::UndefinedMoment("skewness of a degenerate distribution"));
    }
    Ok(8.0 * d.iter().map(|x| x.powi(3)).sum::<f64>() / sigma.powi(3))
}

pub fn excess(d: &[f64]) -> Result<f64> {
    let var = variance_loss(d);
    if var == 0.0 {
        return Err(Error::UndefinedMoment("excess kurtosis of a degenerate distribution"));
    }
    Ok(48.0 * d.iter().map(|x| x.powi(4)).sum::<f64>() / (var * var))
}

/// `L = n Σ d_j`, independent of the sample size.
pub fn scaled_loss(d: &[f64], n: f64) -> f64 {
    n * mean_loss(d)
}

/// Draws of `Σ_j d_j ξ_j^2`.
pub fn sample_loss(d: &[f64], count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            d.iter()
                .map(|dj| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    dj * xi * xi
                })
                .sum()
        })
        .collect()
}

/// Lower bound on `L` for any protocol with a unity decomposition.
pub fn optimal_min_loss(s: usize, r: usize) -> Result<f64> {
    if s < 2 || r == 0 || r > s {
        return Err(Error::InvalidArgument(format!("need 1 <= r <= s and s >= 2, got s={s}, r={r}")));
    }
    let nu = j_max(s, r) as f64;
    Ok(nu * nu / (4.0 * (s - 1) as f64))
}

/// `L` at the maximally mixed state for `l`-qubit polyhedron protocols.
pub fn polyhedron_mixed_min(l: usize) -> f64 {
    (10f64.powi(l as i32) - 1.0) / 4.0
}

/// Closed-form coefficients at the maximally mixed state from the
/// singular values of `B` with unit times, the largest one dropped.
pub fn white_noise_coefficients(p: &InstrumentalMatrix, n: f64) -> Result<LossCoefficients> {
    let s = p.dim();
    let unit = p.with_uniform_time(1.0)?;
    let sv = protocol::singular_values(&unit)?;
    if sv.len() < s * s {
        return Err(Error::IncompleteProtocol { q: sv.len(), needed: s * s });
    }
    if sv.len() > 1 && (sv[0] - sv[1]) <= 1e-9 * sv[0] {
        return Err(Error::AmbiguousNormalization { first: sv[0], second: sv[1] });
    }
    let q = sv.iter().filter(|b| **b > RANK_TOL * sv[0]).count();
    if q < s * s {
        return Err(Error::IncompleteProtocol { q, needed: s * s });
    }
    let m = p.rows() as f64;
    let mut d: Vec<f64> = sv.iter().skip(1).take(s * s - 1).map(|b| m / (4.0 * s as f64 * n * b * b)).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    Ok(LossCoefficients { d, n, s, r: s })
}

/// `z = -log10(1 - F)`; infinite at `F = 1`.
pub fn nines(f: f64) -> f64 {
    if f >= 1.0 {
        f64::INFINITY
    } else {
        -(1.0 - f).log10()
    }
}

pub fn summary_json(c: &LossCoefficients) -> Result<String> {
    Ok(serde_json::to_string_pretty(&c.summary()?)?)
}

#[doc(hidden)]
pub fn theta_vector(c: &ComplexMatrix) -> DVector<f64> {
    DVector::from_vec(matrix_to_theta(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, Direction, PolyhedronKind};
    use crate::numerics::{c64, chi2_cdf};
    use proptest::prelude::*;

    fn pure_at(u: Direction) -> DensityMatrix {
        let [a, b] = geometry::direction_to_qubit(&u);
        DensityMatrix::pure(&[a, b]).unwrap()
    }

    fn l_of(kind: PolyhedronKind, l: usize, rho: &DensityMatrix, r: usize) -> f64 {
        let p = protocol::polyhedron_protocol(kind, l).unwrap();
        loss_coefficients(&p, rho, r, 1e4).unwrap().scaled_loss()
    }

    #[test]
    fn tetrahedron_face_direction_is_the_minimum() {
        for u in geometry::face_directions(PolyhedronKind::Tetrahedron) {
            let l = l_of(PolyhedronKind::Tetrahedron, 1, &pure_at(u), 1);
            assert!((l - 1.0).abs() < 1e-6, "{l}");
        }
    }

    #[test]
    fn tetrahedron_maximum_on_cube_axes() {
        for u in [Direction::new(1.0, 0.0, 0.0), Direction::new(0.0, -1.0, 0.0), Direction::new(0.0, 0.0, 1.0)] {
            let l = l_of(PolyhedronKind::Tetrahedron, 1, &pure_at(u), 1);
            assert!((l - 1.5).abs() < 1e-9, "{l}");
        }
    }

    #[test]
    fn antipode_of_a_face_is_a_boundary_state() {
        let u = geometry::face_directions(PolyhedronKind::Tetrahedron)[0].neg();
        let p = protocol::polyhedron_protocol(PolyhedronKind::Tetrahedron, 1).unwrap();
        assert!(matches!(loss_coefficients(&p, &pure_at(u), 1, 1e4), Err(Error::BoundaryState { row: 0 })));
    }

    #[test]
    fn white_noise_all_polyhedra() {
        let rho = DensityMatrix::maximally_mixed(2);
        for kind in PolyhedronKind::ALL {
            let p = protocol::polyhedron_protocol(kind, 1).unwrap();
            let wn = white_noise_coefficients(&p, 1e3).unwrap();
            assert!((wn.scaled_loss() - 2.25).abs() < 1e-9, "{kind}");
            let lc = loss_coefficients(&p, &rho, 2, 1e3).unwrap();
            assert!((lc.scaled_loss() - 2.25).abs() < 1e-6, "{kind}: {}", lc.scaled_loss());
        }
    }

    #[test]
    fn tetrahedron_white_noise_values() {
        let p = protocol::polyhedron_protocol(PolyhedronKind::Tetrahedron, 1).unwrap();
        let wn = white_noise_coefficients(&p, 1e4).unwrap();
        for d in &wn.d {
            assert!((d - 0.75e-4).abs() < 1e-16);
        }
    }

    #[test]
    fn two_qubit_white_noise() {
        for kind in [PolyhedronKind::Tetrahedron, PolyhedronKind::Cube] {
            let p = protocol::polyhedron_protocol(kind, 2).unwrap();
            let wn = white_noise_coefficients(&p, 1e5).unwrap();
            assert!((wn.scaled_loss() - 24.75).abs() < 1e-6);
            let lc = loss_coefficients(&p, &DensityMatrix::maximally_mixed(4), 4, 1e5).unwrap();
            assert!((lc.scaled_loss() - 24.75).abs() < 1e-6);
            let mut a = wn.d.clone();
            let mut b = lc.d.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-6 * x);
            }
        }
    }

    #[test]
    fn coefficient_count_and_positivity() {
        for kind in PolyhedronKind::ALL {
            let p = protocol::polyhedron_protocol(kind, 1).unwrap();
            for (r, rho) in [(1, states::random_pure(2, 3).density()), (2, states::random_mixed(2, 2, 3).unwrap())] {
                let lc = loss_coefficients(&p, &rho, r, 1e4).unwrap();
                assert_eq!(lc.d.len(), j_max(2, r));
                assert!(lc.d.iter().all(|d| *d > 1e-10 * lc.d[0]), "{kind} r={r}: {:?}", lc.d);
            }
        }
        let p = protocol::polyhedron_protocol(PolyhedronKind::Tetrahedron, 2).unwrap();
        let lc = loss_coefficients(&p, &states::random_pure(4, 1).density(), 1, 1e4).unwrap();
        assert_eq!(lc.d.len(), j_max(4, 1));
        assert!(lc.d.iter().all(|d| *d > 1e-10 * lc.d[0]));
    }

    #[test]
    fn analytic_hessian_matches_finite_differences() {
        for (s, r, seed) in [(2, 1, 1), (2, 2, 2), (4, 1, 3), (4, 2, 4), (4, 4, 5)] {
            let rho = if r == 1 { states::random_pure(s, seed).density() } else { states::random_mixed(s, r, seed).unwrap() };
            let c0 = states::purify(&rho, r).unwrap();
            let a = loss_hessian(&c0).unwrap();
            let fd = loss_hessian_fd(&c0, 1e-4).unwrap();
            let basis = gauge_complement(&c0).unwrap();
            let pa = basis.transpose() * &a * &basis;
            let pf = basis.transpose() * &fd * &basis;
            assert!((&pa - &pf).norm() < 1e-6 * pa.norm(), "s={s} r={r}: {}", (&pa - &pf).norm());
        }
    }

    #[test]
    fn finite_difference_hessian_is_step_consistent() {
        let rho = states::random_mixed(4, 2, 7).unwrap();
        let c0 = states::purify(&rho, 2).unwrap();
        let basis = gauge_complement(&c0).unwrap();
        let h1 = basis.transpose() * loss_hessian_fd(&c0, 1e-4).unwrap() * &basis;
        let h2 = basis.transpose() * loss_hessian_fd(&c0, 5e-5).unwrap() * &basis;
        assert!((&h1 - &h2).norm() < 1e-5 * h1.norm());
    }

    #[test]
    fn gauge_directions_are_null() {
        let rho = states::random_mixed(4, 3, 2).unwrap();
        let c0 = states::purify(&rho, 3).unwrap();
        let a = loss_hessian(&c0).unwrap();
        let basis = gauge_complement(&c0).unwrap();
        let mut proj = DMatrix::<f64>::identity(a.nrows(), a.ncols());
        proj -= &basis * basis.transpose();
        assert!((&a * &proj).norm() < 1e-12);
        assert_eq!(basis.ncols(), 2 * 4 * 3 - 9);
    }

    #[test]
    fn coefficients_scale_with_n() {
        let p = protocol::polyhedron_protocol(PolyhedronKind::Octahedron, 1).unwrap();
        let rho = states::random_pure(2, 9).density();
        let a = loss_coefficients(&p, &rho, 1, 1e4).unwrap();
        let b = loss_coefficients(&p, &rho, 1, 2e4).unwrap();
        for (x, y) in a.d.iter().zip(&b.d) {
            assert!((x / y - 2.0).abs() < 1e-9);
        }
        let c = loss_coefficients(&p, &rho, 1, 1e6).unwrap();
        assert!((a.scaled_loss() / c.scaled_loss() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_mismatch_errors() {
        let p = protocol::polyhedron_protocol(PolyhedronKind::Cube, 1).unwrap();
        let mixed = states::random_mixed(2, 2, 1).unwrap();
        assert!(matches!(loss_coefficients(&p, &mixed, 1, 1e4), Err(Error::RankDeficit { .. })));
    }

    #[test]
    fn moment_examples() {
        for k in [1usize, 3, 10] {
            let d = vec![1.0; k];
            let kf = k as f64;
            assert!((mean_loss(&d) - kf).abs() < 1e-12);
            assert!((variance_loss(&d) - 2.0 * kf).abs() < 1e-12);
            assert!((skewness(&d).unwrap() - (8.0 / kf).sqrt()).abs() < 1e-12);
            assert!((excess(&d).unwrap() - 12.0 / kf).abs() < 1e-12);
        }
        assert!((mean_loss(&[0.5, 0.25]) - 0.75).abs() < 1e-15);
        assert!((variance_loss(&[0.5, 0.25]) - 0.625).abs() < 1e-15);
        assert!(matches!(skewness(&[0.0, 0.0]), Err(Error::UndefinedMoment(_))));
        assert!(matches!(excess(&[]), Err(Error::UndefinedMoment(_))));
    }

    #[test]
    fn sampled_moments_match() {
        let d = [0.7, 0.2, 0.1, 0.05];
        let draws = sample_loss(&d, 1_000_000, 11);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m3 = draws.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let m4 = draws.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let sd = variance_loss(&d).sqrt();
        assert!((mean - mean_loss(&d)).abs() < 4.0 * sd / n.sqrt());
        // Standard error of the sample variance: sqrt((m4 - σ^4) / n).
        let se_var = ((m4 - var * var) / n).sqrt();
        assert!((var - variance_loss(&d)).abs() < 4.0 * se_var);
        let skew = m3 / var.powf(1.5);
        assert!((skew - skewness(&d).unwrap()).abs() < 0.02);
        let _ = m4;
    }

    #[test]
    fn sampler_edge_cases() {
        assert!(sample_loss(&[0.0, 0.0], 100, 1).iter().all(|x| *x == 0.0));
        let draws = sample_loss(&[1.0], 100_000, 2);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() < 0.02);
        assert_eq!(sample_loss(&[0.3, 0.1], 10, 5), sample_loss(&[0.3, 0.1], 10, 5));
    }

    #[test]
    fn sampler_matches_chi_squared() {
        let k = 3;
        let draws = sample_loss(&vec![1.0; k], 100_000, 3);
        let ks = numerics::ks_one_sample(&draws, |x| chi2_cdf(x, k as u32));
        assert!(ks.statistic < 0.01, "{}", ks.statistic);
    }

    #[test]
    fn bound_examples() {
        let cases = [(2, 1, 1.0), (2, 2, 2.25), (4, 1, 3.0), (8, 1, 7.0), (4, 4, 18.75)];
        for (s, r, v) in cases {
            assert_eq!(optimal_min_loss(s, r).unwrap(), v);
        }
        for s in [2usize, 4, 8, 16] {
            let sf = s as f64;
            assert!((optimal_min_loss(s, 1).unwrap() - (sf - 1.0)).abs() < 1e-12);
            assert!((optimal_min_loss(s, s).unwrap() - (sf + 1.0).powi(2) * (sf - 1.0) / 4.0).abs() < 1e-9);
        }
        assert_eq!(polyhedron_mixed_min(1), 2.25);
        assert_eq!(polyhedron_mixed_min(2), 24.75);
        assert_eq!(polyhedron_mixed_min(1), optimal_min_loss(2, 2).unwrap());
    }

    #[test]
    fn nines_examples() {
        assert!((nines(0.999) - 3.0).abs() < 1e-12);
        assert!((nines(0.9) - 1.0).abs() < 1e-12);
        assert_eq!(nines(0.0), 0.0);
        assert_eq!(nines(1.0), f64::INFINITY);
    }

    #[test]
    fn csv_and_summary() {
        let lc = LossCoefficients { d: vec![0.5, 0.25], n: 2.0, s: 2, r: 1 };
        assert_eq!(lc.to_csv().lines().count(), 3);
        let json = summary_json(&lc).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["L"], 1.5);
        assert_eq!(v["j_max"], 2);
        assert_eq!(v["bounds"]["optimal_min"], 1.0);
    }

    #[test]
    fn theta_round_trip() {
        let c = ComplexMatrix::from_fn(3, 2, |a, k| c64(a as f64, k as f64 + 0.5));
        assert_eq!(theta_to_matrix(&matrix_to_theta(&c), 3, 2), c);
    }

    fn rotation(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    }

    fn rotate(m: &[[f64; 3]; 3], u: Direction) -> Direction {
        let v = u.as_array();
        Direction::new(
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        )
    }

    fn protocol_from(dirs: &[Direction]) -> InstrumentalMatrix {
        let rows: Vec<Vec<Complex64>> = dirs
            .iter()
            .map(|u| {
                let [a, b] = geometry::direction_to_qubit(u);
                vec![a.conj(), b.conj()]
            })
            .collect();
        InstrumentalMatrix::from_rows(&rows, 1, "rotated").unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pure_state_loss_respects_lower_bound(seed in any::<u64>(), k in 0usize..7) {
            let kind = PolyhedronKind::ALL[k];
            let p = protocol::polyhedron_protocol(kind, 1).unwrap();
            let rho = states::random_pure(2, seed).density();
            let l = loss_coefficients(&p, &rho, 1, 1e4).unwrap().scaled_loss();
            prop_assert!(l >= 1.0 - 1e-6);
        }

        #[test]
        fn rotation_covariance(seed in any::<u64>(), ax in prop::array::uniform3(-1.0f64..1.0), angle in 0.0f64..std::f64::consts::TAU) {
            prop_assume!(ax.iter().map(|x| x * x).sum::<f64>() > 1e-2);
            let rot = rotation(ax, angle);
            let dirs = geometry::face_directions(PolyhedronKind::Octahedron);
            let psi = states::random_pure(2, seed);
            let u = geometry::qubit_to_direction(&[psi.matrix()[(0, 0)], psi.matrix()[(1, 0)]]);
            let p0 = protocol_from(&dirs);
            let p1 = protocol_from(&dirs.iter().map(|d| rotate(&rot, *d)).collect::<Vec<_>>());
            let l0 = loss_coefficients(&p0, &pure_at(u), 1, 1e4).unwrap().scaled_loss();
            let l1 = loss_coefficients(&p1, &pure_at(rotate(&rot, u)), 1, 1e4).unwrap().scaled_loss();
            prop_assert!((l0 - l1).abs() < 1e-9 * l0);
        }
    }
}
