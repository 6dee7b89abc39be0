//! Density matrices, purifications and fidelity.
//!
//! Multi-qubit basis states are ordered big-endian: `|0...0>` has index 0
//! and `|1...1>` has index `s - 1`, matching the row order of
//! [`crate::protocol::tensor_power`].

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, ComplexMatrix, HERMITIAN_TOL};

/// Eigenvalues above this count towards the rank of a state.
pub const RANK_EIGEN_TOL: f64 = 1e-12;

const STATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: ComplexMatrix,
    rank: Option<usize>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (all to `1e-10`).
    pub fn new(rho: ComplexMatrix) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::DimensionMismatch { expected: rho.nrows(), got: rho.ncols() });
        }
        if !numerics::is_hermitian(&rho, HERMITIAN_TOL) {
            return Err(Error::NotHermitian {
                asymmetry: numerics::hermitian_asymmetry(&rho),
            });
        }
        let tr = numerics::trace(&rho).re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let eig = numerics::eigh(&rho)?;
        let min = eig.eigenvalues.min();
        if min < -STATE_TOL {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(Self { rho, rank: None })
    }

    /// Hermitizes, clips negative eigenvalues and renormalizes the trace.
    pub fn project(h: &ComplexMatrix) -> Result<Self> {
        let eig = numerics::eigh(&numerics::hermitize(h))?;
        let total: f64 = eig.eigenvalues.iter().map(|w| w.max(0.0)).sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateState);
        }
        let rho = eig.map_reconstruct(|w| w.max(0.0) / total);
        Ok(Self {
            rho: numerics::hermitize(&rho),
            rank: None,
        })
    }

    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm > 0.0) {
            return Err(Error::DegenerateState);
        }
        let s = psi.len();
        let rho = ComplexMatrix::from_fn(s, s, |a, b| psi[a] * psi[b].conj() / norm);
        Ok(Self { rho, rank: Some(1) })
    }

    pub fn maximally_mixed(s: usize) -> Self {
        Self {
            rho: ComplexMatrix::identity(s, s).scale(1.0 / s as f64),
            rank: Some(s),
        }
    }

    pub fn with_rank(mut self, r: usize) -> Self {
        self.rank = Some(r);
        self
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn declared_rank(&self) -> Option<usize> {
        self.rank
    }

    /// Declared rank, or the number of eigenvalues above [`RANK_EIGEN_TOL`].
    pub fn rank(&self) -> usize {
        self.rank.unwrap_or_else(|| infer_rank(self))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        numerics::eigh(&self.rho)
            .map(|e| e.eigenvalues.iter().copied().collect())
            .unwrap_or_default()
    }
}

pub fn infer_rank(rho: &DensityMatrix) -> usize {
    rho.eigenvalues().iter().filter(|w| **w > RANK_EIGEN_TOL).count()
}

/// Factor `c` (`s x r`) with `ρ = c c^†` and `tr(c c^†) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Purification {
    c: ComplexMatrix,
}

impl Purification {
    pub fn new(c: ComplexMatrix) -> Result<Self> {
        let tr = c.norm_squared();
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("purification trace {tr} != 1")));
        }
        Ok(Self { c })
    }

    pub fn normalized(c: ComplexMatrix) -> Result<Self> {
        let n = c.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::DegenerateState);
        }
        Ok(Self { c: c.unscale(n) })
    }

    pub fn from_vector(psi: &[Complex64]) -> Result<Self> {
        Self::normalized(ComplexMatrix::from_column_slice(psi.len(), 1, psi))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.c
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn rank(&self) -> usize {
        self.c.ncols()
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix {
            rho: numerics::hermitize(&(&self.c * self.c.adjoint())),
            rank: None,
        }
    }

    /// Right-multiplication by an `r x r` matrix (a gauge transform when
    /// unitary).
    pub fn gauge(&self, v: &ComplexMatrix) -> Result<Self> {
        if v.nrows() != self.rank() {
            return Err(Error::DimensionMismatch { expected: self.rank(), got: v.nrows() });
        }
        Self::normalized(&self.c * v)
    }
}

/// `F = (tr sqrt(sqrt(ρ0) ρ sqrt(ρ0)))^2`.
pub fn fidelity(rho0: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    if rho0.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho0.dim(), got: rho.dim() });
    }
    let s0 = truncated_sqrt(rho0.matrix())?;
    let inner = numerics::hermitize(&(&s0 * rho.matrix() * &s0));
    let tr = numerics::trace(&truncated_sqrt(&inner)?).re;
    Ok((tr * tr).clamp(0.0, 1.0))
}

/// PSD square root with eigenvalues below `RANK_EIGEN_TOL * max` set to
/// zero, so rounding noise on a null space does not contribute `sqrt(eps)`.
fn truncated_sqrt(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = numerics::eigh(h)?;
    let wmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if let Some(w) = eig.eigenvalues.iter().find(|w| **w < -numerics::PSD_CLIP * wmax.max(1.0)) {
        return Err(Error::NotPsd { min_eigenvalue: *w });
    }
    Ok(eig.map_reconstruct(|w| if w > RANK_EIGEN_TOL * wmax { w.sqrt() } else { 0.0 }))
}

/// `F = max |<c0|c V>|^2` over unitaries `V`, equal to the squared nuclear
/// norm of `c0^† c`.
pub fn uhlmann_fidelity(c0: &Purification, c: &Purification) -> Result<f64> {
    if c0.dim() != c.dim() {
        return Err(Error::DimensionMismatch { expected: c0.dim(), got: c.dim() });
    }
    let overlap = c0.matrix().adjoint() * c.matrix();
    let nuclear: f64 = numerics::svd(&overlap)?.singular_values.iter().sum();
    Ok((nuclear * nuclear).clamp(0.0, 1.0))
}

/// `1 - F` computed through purifications of both states, which avoids
/// the square roots of vanishing eigenvalues that limit the accuracy of
/// [`fidelity`] near pure states.
pub fn fidelity_loss(rho0: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    let c0 = purify(rho0, infer_rank(rho0).max(1))?;
    let c = purify(rho, infer_rank(rho).max(1))?;
    Ok(1.0 - uhlmann_fidelity(&c0, &c)?)
}

/// Purification from the `r` largest eigenpairs, columns `sqrt(w_i) v_i`.
pub fn purify(rho: &DensityMatrix, r: usize) -> Result<Purification> {
    let s = rho.dim();
    if r == 0 || r > s {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={s}")));
    }
    let eig = numerics::eigh(rho.matrix())?;
    let actual = eig.eigenvalues.iter().filter(|w| **w > RANK_EIGEN_TOL).count();
    if actual > r {
        return Err(Error::RankDeficit { requested: r, actual });
    }
    let c = ComplexMatrix::from_fn(s, r, |a, k| {
        let idx = s - 1 - k;
        eig.eigenvectors[(a, idx)] * eig.eigenvalues[idx].max(0.0).sqrt()
    });
    Purification::normalized(c)
}

/// `(|0...0> + |1...1>)/sqrt(2)` on `l >= 2` qubits.
pub fn ghz(l: usize) -> Result<Purification> {
    if !(2..usize::BITS as usize).contains(&l) {
        return Err(Error::InvalidArgument(format!("GHZ state needs at least 2 qubits, got {l}")));
    }
    let s = 1usize << l;
    let mut psi = vec![Complex64::new(0.0, 0.0); s];
    psi[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    psi[s - 1] = psi[0];
    Purification::from_vector(&psi)
}

/// `ρ = f E/s + (1 - f) |ψ><ψ|`.
pub fn white_noise_mix(f: f64, psi: &Purification) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidArgument(format!("white-noise weight {f} outside [0, 1]")));
    }
    if psi.rank() != 1 {
        return Err(Error::InvalidArgument("white_noise_mix expects a pure state".into()));
    }
    let s = psi.dim();
    let pure = psi.matrix() * psi.matrix().adjoint();
    let rho = ComplexMatrix::identity(s, s).scale(f / s as f64) + pure.scale(1.0 - f);
    let rank = if f > 0.0 { s } else { 1 };
    Ok(DensityMatrix {
        rho: numerics::hermitize(&rho),
        rank: Some(rank),
    })
}

fn gaussian_matrix(s: usize, r: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexMatrix::from_fn(s, r, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    })
}

/// Haar-random pure state from i.i.d. complex Gaussian amplitudes.
pub fn random_pure(s: usize, seed: u64) -> Purification {
    Purification::normalized(gaussian_matrix(s, 1, seed)).expect("gaussian vector is nonzero")
}

/// `ρ = c c^†` for a normalized Gaussian `s x r` factor.
pub fn random_mixed(s: usize, r: usize, seed: u64) -> Result<DensityMatrix> {
    if r == 0 || r > s {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={s}")));
    }
    let p = Purification::normalized(gaussian_matrix(s, r, seed))?;
    Ok(p.density().with_rank(r))
}

/// JSON form of a density matrix; `entries` is row-major `s x s`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StateFile {
    pub s: usize,
    pub r: usize,
    pub entries: Vec<[f64; 2]>,
}

impl From<&DensityMatrix> for StateFile {
    fn from(rho: &DensityMatrix) -> Self {
        let s = rho.dim();
        StateFile {
            s,
            r: rho.rank(),
            entries: (0..s * s)
                .map(|k| {
                    let z = rho.rho[(k / s, k % s)];
                    [z.re, z.im]
                })
                .collect(),
        }
    }
}

impl TryFrom<StateFile> for DensityMatrix {
    type Error = Error;

    fn try_from(f: StateFile) -> Result<Self> {
        if f.entries.len() != f.s * f.s {
            return Err(Error::DimensionMismatch { expected: f.s * f.s, got: f.entries.len() });
        }
        let rho = ComplexMatrix::from_fn(f.s, f.s, |a, b| {
            let [re, im] = f.entries[a * f.s + b];
            Complex64::new(re, im)
        });
        Ok(DensityMatrix::new(rho)?.with_rank(f.r))
    }
}

pub fn to_json(rho: &DensityMatrix) -> Result<String> {
    Ok(serde_json::to_string_pretty(&StateFile::from(rho))?)
}

pub fn from_json(text: &str) -> Result<DensityMatrix> {
    let f: StateFile = serde_json::from_str(text)?;
    f.try_into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c64;
    use proptest::prelude::*;

    fn random_unitary(r: usize, seed: u64) -> ComplexMatrix {
        let g = gaussian_matrix(r, r, seed);
        numerics::svd(&g).map(|d| d.u * d.v.adjoint()).unwrap()
    }

    fn random_state(s: usize, r: usize, seed: u64) -> DensityMatrix {
        random_mixed(s, r, seed).unwrap()
    }

    #[test]
    fn fidelity_examples() {
        let rho = random_state(3, 2, 1);
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-10);
        let up = DensityMatrix::pure(&[c64(1.0, 0.0), c64(0.0, 0.0)]).unwrap();
        let down = DensityMatrix::pure(&[c64(0.0, 0.0), c64(1.0, 0.0)]).unwrap();
        assert!(fidelity(&up, &down).unwrap().abs() < 1e-14);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!((fidelity(&up, &mixed).unwrap() - 0.5).abs() < 1e-14);
        assert!(fidelity(&up, &DensityMatrix::maximally_mixed(3)).is_err());
    }

    #[test]
    fn uhlmann_examples() {
        let c = random_pure(4, 2);
        assert!((uhlmann_fidelity(&c, &c).unwrap() - 1.0).abs() < 1e-14);
        let a = Purification::from_vector(&[c64(1.0, 0.0), c64(0.0, 0.0)]).unwrap();
        let b = Purification::from_vector(&[c64(0.0, 0.0), c64(0.0, 1.0)]).unwrap();
        assert_eq!(uhlmann_fidelity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn uhlmann_matches_sqrt_formula() {
        for seed in 0..1000u64 {
            let s = 1 + (seed as usize % 8);
            let r0 = 1 + (seed as usize / 8) % s;
            let r1 = 1 + (seed as usize / 3) % s;
            let rho0 = random_state(s, r0, seed);
            let rho1 = random_state(s, r1, seed + 10_000);
            let f1 = fidelity(&rho0, &rho1).unwrap();
            let f2 = uhlmann_fidelity(&purify(&rho0, infer_rank(&rho0)).unwrap(), &purify(&rho1, infer_rank(&rho1)).unwrap()).unwrap();
            assert!((f1 - f2).abs() < 1e-10, "s={s} {f1} {f2}");
            assert!((fidelity(&rho1, &rho0).unwrap() - f1).abs() < 1e-10);
        }
    }

    #[test]
    fn gauge_invariance() {
        for seed in 0..200u64 {
            let s = 2 + seed as usize % 7;
            let r = 1 + seed as usize % s;
            let c0 = purify(&random_state(s, r, seed), r).unwrap();
            let c = purify(&random_state(s, r, seed + 1), r).unwrap();
            let v = random_unitary(r, seed + 2);
            let f = uhlmann_fidelity(&c0, &c).unwrap();
            let g = uhlmann_fidelity(&c0, &c.gauge(&v).unwrap()).unwrap();
            assert!((f - g).abs() < 1e-12);
        }
    }

    #[test]
    fn purify_examples() {
        let psi = random_pure(3, 4);
        let c = purify(&psi.density(), 1).unwrap();
        assert!((uhlmann_fidelity(&psi, &c).unwrap() - 1.0).abs() < 1e-12);
        let half = purify(&DensityMatrix::maximally_mixed(2), 2).unwrap();
        assert!((half.density().matrix() - DensityMatrix::maximally_mixed(2).matrix()).norm() < 1e-14);
        let mixed = white_noise_mix(0.5, &ghz(4).unwrap()).unwrap();
        let c = purify(&mixed, 16).unwrap();
        assert!((c.density().matrix() - mixed.matrix()).norm() < 1e-10);
        assert!(matches!(purify(&mixed, 3), Err(Error::RankDeficit { .. })));
    }

    #[test]
    fn ghz_states() {
        let bell = ghz(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v: Vec<Complex64> = bell.matrix().iter().copied().collect();
        assert_eq!(v, vec![c64(h, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(h, 0.0)]);
        for l in 2..=8 {
            let g = ghz(l).unwrap();
            assert!((g.matrix().norm() - 1.0).abs() < 1e-15);
            assert_eq!(g.dim(), 1 << l);
        }
        assert!(ghz(1).is_err());
    }

    #[test]
    fn white_noise_examples() {
        let g = ghz(4).unwrap();
        let pure = white_noise_mix(0.0, &g).unwrap();
        assert!((pure.matrix() - g.density().matrix()).norm() < 1e-15);
        let noise = white_noise_mix(1.0, &g).unwrap();
        assert!((noise.matrix() - DensityMatrix::maximally_mixed(16).matrix()).norm() < 1e-15);
        let half = white_noise_mix(0.5, &g).unwrap();
        let w = numerics::eigh(half.matrix()).unwrap().eigenvalues;
        for k in 0..15 {
            assert!((w[k] - 0.5 / 16.0).abs() < 1e-14);
        }
        assert!((w[15] - (0.5 + 0.5 / 16.0)).abs() < 1e-14);
        assert_eq!(half.rank(), 16);
    }

    #[test]
    fn random_states() {
        assert_eq!(random_pure(5, 9), random_pure(5, 9));
        assert_ne!(random_pure(5, 9), random_pure(5, 10));
        let m = random_mixed(4, 2, 3).unwrap();
        assert_eq!(infer_rank(&DensityMatrix::new(m.matrix().clone()).unwrap()), 2);
        let mut mean = [0.0; 3];
        let count = 10_000;
        for seed in 0..count {
            let psi = random_pure(2, seed);
            let d = crate::geometry::qubit_to_direction(&[psi.matrix()[(0, 0)], psi.matrix()[(1, 0)]]);
            for (m, c) in mean.iter_mut().zip(d.as_array()) {
                *m += c / count as f64;
            }
        }
        let norm = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 0.05, "{norm}");
    }

    #[test]
    fn monotone_under_depolarization() {
        for seed in 0..20 {
            let psi = random_pure(4, seed);
            let rho0 = psi.density();
            let mut prev = 1.0 + 1e-12;
            for k in 0..=20 {
                let eps = k as f64 / 20.0;
                let rho = white_noise_mix(eps, &psi).unwrap();
                let f = fidelity(&rho0, &rho).unwrap();
                assert!(f <= prev + 1e-12);
                prev = f;
            }
        }
    }

    #[test]
    fn density_validation() {
        let bad = ComplexMatrix::from_row_slice(2, 2, &[c64(0.5, 0.0), c64(1.0, 0.0), c64(0.0, 0.0), c64(0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(bad), Err(Error::NotHermitian { .. })));
        let neg = ComplexMatrix::from_row_slice(2, 2, &[c64(1.5, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(-0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(neg.clone()), Err(Error::NotPsd { .. })));
        let fixed = DensityMatrix::project(&neg).unwrap();
        assert!((fixed.matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn state_json_round_trip(seed in any::<u64>(), s in 1usize..6) {
            let rho = random_state(s, 1 + seed as usize % s, seed);
            let back = from_json(&to_json(&rho).unwrap()).unwrap();
            prop_assert_eq!(back.matrix(), rho.matrix());
            prop_assert_eq!(back.rank(), rho.rank());
        }
    }
}
