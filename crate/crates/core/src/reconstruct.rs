//! State estimation from count data.
//!
//! The zero approximation solves `B vec(ρ) = K` through the SVD of the
//! measurement matrix. Maximum likelihood then works on a purification
//! `c` (`s x r`, unnormalized so that `Σ_j t_j tr(Λ_j c c^†)` matches the
//! observed total) and iterates the Poisson likelihood equation
//! `I c = J(c) c` with `I = Σ_j t_j Λ_j` and `J(c) = Σ_j (k_j / λ_j) Λ_j`.

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::adequacy::{self, AdequacyReport};
use crate::error::{Error, Result};
use crate::numerics::{self, ComplexMatrix, RANK_TOL};
use crate::protocol::{self, InstrumentalMatrix};
use crate::states::{DensityMatrix, Purification};

#[derive(Debug, Clone)]
pub struct MleOptions {
    pub max_iter: usize,
    /// Bound on `||I c - J(c) c|| / ||I c||`.
    pub tol_stationarity: f64,
    /// Bound on the relative change of `c` between accepted iterates.
    pub tol_step: f64,
    /// Initial (and restored) damping factor of the fixed-point step.
    pub step: f64,
    /// Seed for the perturbation of empty starting columns.
    pub seed: u64,
    pub start: Option<Purification>,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol_stationarity: 1e-8,
            tol_step: 1e-10,
            step: 0.5,
            seed: 0,
            start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub c_hat: Purification,
    pub rho_hat: DensityMatrix,
    pub rank: usize,
    /// `Σ_j k_j ln(t_j λ_j) - t_j λ_j`, without the `ln k_j!` constant.
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative stationarity residual at the returned estimate.
    pub gradient_norm: f64,
    /// Fitted expected counts `t_j λ̂_j`; they sum to the observed total.
    pub expected_counts: Vec<f64>,
}

/// Serialized form of a [`ReconstructionResult`].
#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionReport {
    pub rho_hat: Vec<[f64; 2]>,
    pub s: usize,
    pub r: usize,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity_vs_truth: Option<f64>,
}

impl ReconstructionResult {
    pub fn report(&self, truth: Option<&DensityMatrix>) -> Result<ReconstructionReport> {
        let s = self.rho_hat.dim();
        let fidelity_vs_truth = match truth {
            Some(t) => Some(1.0 - crate::states::fidelity_loss(t, &self.rho_hat)?),
            None => None,
        };
        Ok(ReconstructionReport {
            rho_hat: (0..s * s)
                .map(|k| {
                    let z = self.rho_hat.matrix()[(k / s, k % s)];
                    [z.re, z.im]
                })
                .collect(),
            s,
            r: self.rank,
            loglik: self.loglik,
            iterations: self.iterations,
            converged: self.converged,
            gradient_norm: self.gradient_norm,
            fidelity_vs_truth,
        })
    }
}

fn check_counts(p: &InstrumentalMatrix, counts: &[f64]) -> Result<f64> {
    if counts.len() != p.rows() {
        return Err(Error::DimensionMismatch { expected: p.rows(), got: counts.len() });
    }
    if let Some(k) = counts.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
        return Err(Error::InvalidArgument(format!("invalid count {k}")));
    }
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("no events recorded".into()));
    }
    Ok(total)
}

/// Unprojected solution of `B vec(ρ) = K` via `f = S^+ U^† K`,
/// `vec(ρ) = V f`.
pub fn linear_inversion(p: &InstrumentalMatrix, counts: &[f64]) -> Result<ComplexMatrix> {
    check_counts(p, counts)?;
    let s = p.dim();
    let b = protocol::measurement_matrix(p)?;
    let dec = numerics::svd(&b.b)?;
    let q = dec.rank(RANK_TOL);
    if q < s * s {
        return Err(Error::IncompleteProtocol { q, needed: s * s });
    }
    let k = numerics::ComplexVector::from_iterator(counts.len(), counts.iter().map(|x| Complex64::new(*x, 0.0)));
    let mut f = dec.u.adjoint() * k;
    for (fi, si) in f.iter_mut().zip(dec.singular_values.iter()) {
        *fi /= *si;
    }
    Ok(numerics::devec(&(&dec.v * f), s))
}

/// Linear inversion projected onto the physical states.
pub fn pseudo_inverse_estimate(p: &InstrumentalMatrix, counts: &[f64]) -> Result<DensityMatrix> {
    DensityMatrix::project(&linear_inversion(p, counts)?)
}

/// Zero approximation; protocols whose measurement matrix exceeds the
/// memory cap fall back to the back-projection `Σ_j k_j Λ_j`.
fn zero_approximation(p: &InstrumentalMatrix, counts: &[f64]) -> Result<DensityMatrix> {
    match pseudo_inverse_estimate(p, counts) {
        Err(Error::MemoryCap { .. }) => {
            let mut wx = p.matrix().clone();
            for (j, k) in counts.iter().enumerate() {
                wx.row_mut(j).scale_mut(*k);
            }
            DensityMatrix::project(&(p.matrix().adjoint() * wx))
        }
        other => other,
    }
}

fn truncated_start(rho: &DensityMatrix, r: usize, seed: u64) -> Result<ComplexMatrix> {
    let s = rho.dim();
    let eig = numerics::eigh(rho.matrix())?;
    let mut c = ComplexMatrix::from_fn(s, r, |a, k| {
        let idx = s - 1 - k;
        eig.eigenvectors[(a, idx)] * eig.eigenvalues[idx].max(0.0).sqrt()
    });
    let scale = c.norm().max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..r {
        if c.column(k).norm() <= 1e-12 * scale {
            for a in 0..s {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                c[(a, k)] = Complex64::new(re, im) * (1e-6 * scale / (2.0 * s as f64).sqrt());
            }
        }
    }
    Ok(c)
}

struct Evaluation {
    y: ComplexMatrix,
    expected: Vec<f64>,
    loglik: f64,
}

struct Model<'a> {
    p: &'a InstrumentalMatrix,
    counts: &'a [f64],
    floor: f64,
}

impl Model<'_> {
    fn evaluate(&self, c: &ComplexMatrix) -> Evaluation {
        let y = self.p.matrix() * c;
        let mut loglik = 0.0;
        let expected: Vec<f64> = (0..self.p.rows())
            .map(|j| {
                let lam: f64 = y.row(j).iter().map(|z| z.norm_sqr()).sum();
                let mu = lam * self.p.times()[j];
                let k = self.counts[j];
                if k > 0.0 {
                    loglik += k * mu.max(self.floor).ln();
                }
                loglik -= mu;
                mu
            })
            .collect();
        Evaluation { y, expected, loglik }
    }

    /// `J(c) c = X^† diag(k_j t_j / μ_j) X c`.
    fn j_times_c(&self, ev: &Evaluation) -> ComplexMatrix {
        let mut wy = ev.y.clone();
        for j in 0..self.p.rows() {
            let w = self.counts[j] * self.p.times()[j] / ev.expected[j].max(self.floor);
            wy.row_mut(j).scale_mut(w);
        }
        self.p.matrix().adjoint() * wy
    }
}

/// Maximum-likelihood estimate of rank `r`.
pub fn mle(p: &InstrumentalMatrix, counts: &[f64], r: usize, opts: &MleOptions) -> Result<ReconstructionResult> {
    let total = check_counts(p, counts)?;
    let s = p.dim();
    if r == 0 || r > s {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={s}")));
    }
    let frame = p.frame_operator();
    let chol = Cholesky::new(frame.clone()).ok_or_else(|| Error::IncompleteProtocol {
        q: numerics::svd(&frame).map(|d| d.rank(RANK_TOL)).unwrap_or(0),
        needed: s,
    })?;

    let mut c = match &opts.start {
        Some(start) => {
            if start.dim() != s || start.rank() != r {
                return Err(Error::DimensionMismatch { expected: s * r, got: start.dim() * start.rank() });
            }
            start.matrix().clone()
        }
        None => truncated_start(&zero_approximation(p, counts)?, r, opts.seed)?,
    };
    let model = Model {
        p,
        counts,
        floor: 1e-12 * total / p.rows() as f64,
    };
    let norm_to_total = |c: &mut ComplexMatrix| -> Result<()> {
        let predicted: f64 = numerics::trace(&(c.adjoint() * &frame * &*c)).re;
        if !(predicted > 0.0) {
            return Err(Error::DegenerateState);
        }
        *c *= Complex64::new((total / predicted).sqrt(), 0.0);
        Ok(())
    };
    norm_to_total(&mut c)?;

    let mut ev = model.evaluate(&c);
    let mut alpha = opts.step;
    let mut last_step = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let jc = model.j_times_c(&ev);
        let ic = &frame * &c;
        residual = (&ic - &jc).norm() / ic.norm();
        if residual <= opts.tol_stationarity && last_step <= opts.tol_step {
            converged = true;
            break;
        }
        let target = chol.solve(&jc);
        iterations += 1;
        let mut accepted = false;
        while alpha >= 1e-12 {
            let candidate = c.scale(1.0 - alpha) + target.scale(alpha);
            let cand_ev = model.evaluate(&candidate);
            if cand_ev.loglik >= ev.loglik - 1e-12 * ev.loglik.abs() {
                last_step = (&candidate - &c).norm() / c.norm();
                c = candidate;
                ev = cand_ev;
                accepted = true;
                break;
            }
            alpha /= 2.0;
        }
        if !accepted {
            break;
        }
        alpha = opts.step;
    }

    norm_to_total(&mut c)?;
    let ev = model.evaluate(&c);
    let c_hat = Purification::normalized(c)?;
    let rho_hat = c_hat.density().with_rank(r);
    Ok(ReconstructionResult {
        c_hat,
        rho_hat,
        rank: r,
        loglik: ev.loglik,
        iterations,
        converged,
        gradient_norm: residual,
        expected_counts: ev.expected,
    })
}

#[derive(Debug, Clone)]
pub struct AutoOptions {
    /// Candidate ranks; `None` means `1..=s`.
    pub ranks: Option<Vec<usize>>,
    pub alpha: f64,
    pub mle: MleOptions,
}

impl Default for AutoOptions {
    fn default() -> Self {
        Self {
            ranks: None,
            alpha: 0.05,
            mle: MleOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RankCandidate {
    pub rank: usize,
    pub result: ReconstructionResult,
    /// `None` when the rank leaves no degrees of freedom for the test.
    pub report: Option<AdequacyReport>,
}

#[derive(Debug, Clone)]
pub struct AutoReconstruction {
    pub selected: usize,
    pub result: ReconstructionResult,
    /// `Some(false)` when no candidate passed; `None` when the selected
    /// rank could not be tested.
    pub adequate: Option<bool>,
    pub candidates: Vec<RankCandidate>,
}

/// Fits every candidate rank and selects the smallest one that passes the
/// chi-squared adequacy test at level `alpha`. A rank with no degrees of
/// freedom left cannot be rejected and is accepted as saturated.
pub fn reconstruct_auto(p: &InstrumentalMatrix, counts: &[f64], opts: &AutoOptions) -> Result<AutoReconstruction> {
    let s = p.dim();
    let mut ranks = opts.ranks.clone().unwrap_or_else(|| (1..=s).collect());
    ranks.sort_unstable();
    ranks.dedup();
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("no candidate ranks".into()));
    }
    let mut candidates = Vec::with_capacity(ranks.len());
    for &r in &ranks {
        let result = mle(p, counts, r, &opts.mle)?;
        let report = match adequacy::adequacy_test(p, counts, &result, opts.alpha) {
            Ok(rep) => Some(rep),
            Err(Error::NotTestable { .. }) => None,
            Err(e) => return Err(e),
        };
        candidates.push(RankCandidate { rank: r, result, report });
    }
    let chosen = candidates
        .iter()
        .position(|c| c.report.as_ref().is_none_or(|rep| rep.adequate));
    let (idx, adequate) = match chosen {
        Some(i) => (i, candidates[i].report.as_ref().map(|rep| rep.adequate)),
        None => (candidates.len() - 1, Some(false)),
    };
    Ok(AutoReconstruction {
        selected: candidates[idx].rank,
        result: candidates[idx].result.clone(),
        adequate,
        candidates,
    })
}
