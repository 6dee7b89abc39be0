//! Bloch-sphere scans and extremal searches of the scaled loss `L` over
//! pure true states.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{self, Direction};
use crate::lossdist;
use crate::numerics::{self, mix_seed, ComplexMatrix, ComplexVector};
use crate::protocol::InstrumentalMatrix;
use crate::states::{self, DensityMatrix};

/// Chart distance of the step taken off a boundary state (about
/// `2e-8` rad on the Bloch sphere).
pub const BOUNDARY_NUDGE: f64 = 1e-8;

/// Local searches ending with `min λ_j / max λ_j` below this have climbed
/// toward a boundary state; the best value among the remaining searches is
/// reported as the interior extreme.
pub const BOUNDARY_APPROACH: f64 = 1e-4;

/// Local real coordinates `x ↦ normalize(ψ0 + Σ_k (x_2k + i x_2k+1) e_k)`
/// with `e_k` an orthonormal basis of the complement of `ψ0`.
#[derive(Debug, Clone)]
pub struct Chart {
    center: ComplexVector,
    basis: Vec<ComplexVector>,
}

impl Chart {
    pub fn new(psi: &[Complex64]) -> Result<Self> {
        let s = psi.len();
        let center = ComplexVector::from_column_slice(psi);
        let norm = center.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let center = center / Complex64::new(norm, 0.0);
        let proj = ComplexMatrix::identity(s, s) - &center * center.adjoint();
        let eig = numerics::eigh(&numerics::hermitize(&proj))?;
        let basis = (1..s).map(|k| eig.eigenvectors.column(k).into_owned()).collect();
        Ok(Self { center, basis })
    }

    pub fn dim(&self) -> usize {
        2 * self.basis.len()
    }

    pub fn point(&self, x: &[f64]) -> Vec<Complex64> {
        let mut v = self.center.clone();
        for (k, e) in self.basis.iter().enumerate() {
            v += e * Complex64::new(x[2 * k], x[2 * k + 1]);
        }
        let n = v.norm();
        v.iter().map(|z| z / n).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PureLoss {
    #[serde(rename = "L")]
    pub l: f64,
    /// The state zeroes some row; `l` was taken at a nudged neighbour.
    pub boundary: bool,
}

/// `L` for the pure true state `psi`. Boundary states, where the Fisher
/// information is singular, are replaced by a neighbour a fixed small step
/// away, which gives the limiting value along that direction.
pub fn pure_loss(p: &InstrumentalMatrix, psi: &[Complex64]) -> Result<PureLoss> {
    let eval = |v: &[Complex64]| -> Result<f64> {
        let rho = DensityMatrix::pure(v)?;
        Ok(lossdist::loss_coefficients(p, &rho, 1, 1.0)?.scaled_loss())
    };
    match eval(psi) {
        Ok(l) => Ok(PureLoss { l, boundary: false }),
        Err(Error::BoundaryState { row }) => {
            // A fixed generic direction, so the result is reproducible and
            // no coordinate subspace keeps the row at zero.
            let chart = Chart::new(psi)?;
            for scale in [1.0, 10.0, 100.0] {
                let x: Vec<f64> = (0..chart.dim())
                    .map(|k| scale * BOUNDARY_NUDGE * (0.6 + 0.4 * ((k + 1) as f64).sin()))
                    .collect();
                match eval(&chart.point(&x)) {
                    Ok(l) => return Ok(PureLoss { l, boundary: true }),
                    Err(Error::BoundaryState { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::BoundaryState { row })
        }
        Err(e) => Err(e),
    }
}

pub fn bloch_loss(p: &InstrumentalMatrix, u: &Direction) -> Result<PureLoss> {
    pure_loss(p, &geometry::direction_to_qubit(u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereGrid {
    pub resolution_deg: f64,
}

impl SphereGrid {
    pub fn new(resolution_deg: f64) -> Result<Self> {
        if !(resolution_deg > 0.0 && resolution_deg <= 90.0) {
            return Err(Error::InvalidArgument(format!("resolution {resolution_deg} outside (0, 90]")));
        }
        Ok(Self { resolution_deg })
    }

    /// `(θ, φ)` in degrees: `θ` from 0 to 180 inclusive, `φ` from 0 up to
    /// but excluding 360.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let res = self.resolution_deg;
        let nt = (180.0 / res + 1e-9).floor() as usize;
        let np = (360.0 / res - 1e-9).ceil() as usize;
        let mut out = Vec::with_capacity((nt + 1) * np);
        for i in 0..=nt {
            for k in 0..np {
                out.push((i as f64 * res, k as f64 * res));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlochPoint {
    pub theta_deg: f64,
    pub phi_deg: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Angles {
    pub theta_deg: f64,
    pub phi_deg: f64,
}

/// Extreme values of `L` with their locations. `certified` is false when
/// a local search stopped before meeting its convergence criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremes<A> {
    #[serde(rename = "L_min")]
    pub l_min: f64,
    #[serde(rename = "L_max")]
    pub l_max: f64,
    pub argmin: A,
    pub argmax: A,
    pub certified: bool,
    /// Local searches that ended next to a boundary state.
    #[serde(skip_serializing_if = "is_zero")]
    pub boundary_runs: usize,
    /// Largest local maximum found away from the boundary, when it differs
    /// from `L_max`.
    #[serde(rename = "L_max_interior", skip_serializing_if = "Option::is_none")]
    pub l_max_interior: Option<f64>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone)]
pub struct BlochScan {
    pub points: Vec<BlochPoint>,
    pub extremes: Extremes<Angles>,
}

impl BlochScan {
    /// CSV with columns `theta_deg,phi_deg,L`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_deg,phi_deg,L\n");
        for pt in &self.points {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", pt.theta_deg, pt.phi_deg, pt.l));
        }
        out
    }

    pub fn extremes_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.extremes)?)
    }
}

fn point_at(p: &InstrumentalMatrix, theta_deg: f64, phi_deg: f64) -> Result<BlochPoint> {
    let u = Direction::from_spherical(theta_deg.to_radians(), phi_deg.to_radians());
    let pl = bloch_loss(p, &u)?;
    Ok(BlochPoint { theta_deg, phi_deg, l: pl.l, boundary: pl.boundary })
}

fn to_point(psi: &[Complex64], pl: PureLoss) -> BlochPoint {
    let u = geometry::qubit_to_direction(&[psi[0], psi[1]]);
    let (theta, phi) = u.spherical();
    BlochPoint {
        theta_deg: theta.to_degrees(),
        phi_deg: phi.to_degrees().rem_euclid(360.0),
        l: pl.l,
        boundary: pl.boundary,
    }
}

fn argmin_error(e: argmin::core::Error) -> Error {
    Error::NumericFailure { routine: "optimizer", detail: e.to_string() }
}

/// Signed loss along one chart coordinate.
struct LineCost<'a> {
    p: &'a InstrumentalMatrix,
    chart: &'a Chart,
    x: Vec<f64>,
    axis: usize,
    sign: f64,
}

impl CostFunction for LineCost<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, t: &f64) -> std::result::Result<f64, argmin::core::Error> {
        let mut x = self.x.clone();
        x[self.axis] = *t;
        let pl = pure_loss(self.p, &self.chart.point(&x)).map_err(|e| argmin::core::Error::msg(e.to_string()))?;
        Ok(self.sign * pl.l)
    }
}

fn golden(cost: LineCost<'_>, half_width: f64) -> Result<(f64, f64)> {
    let solver = GoldenSectionSearch::new(-half_width, half_width)
        .and_then(|s| s.with_tolerance(1e-8))
        .map_err(argmin_error)?;
    let res = Executor::new(cost, solver)
        .configure(|st| st.param(0.0).max_iters(200))
        .run()
        .map_err(argmin_error)?;
    let st = res.state();
    Ok((*st.get_best_param().unwrap_or(&0.0), st.get_best_cost()))
}

/// Alternating golden-section searches in a tangent chart, recentred after
/// every sweep, until the point moves less than `1e-6` rad.
fn refine(p: &InstrumentalMatrix, start: &BlochPoint, bracket_rad: f64, maximize: bool) -> Result<(BlochPoint, bool)> {
    let sign = if maximize { -1.0 } else { 1.0 };
    let mut psi = geometry::direction_to_qubit(&Direction::from_spherical(
        start.theta_deg.to_radians(),
        start.phi_deg.to_radians(),
    ))
    .to_vec();
    let mut best = pure_loss(p, &psi)?;
    // Chart coordinates are half-angles on the Bloch sphere.
    let mut half_width = bracket_rad / 2.0;
    let mut converged = false;
    for _ in 0..200 {
        let chart = Chart::new(&psi)?;
        let mut x = vec![0.0; 2];
        for axis in 0..2 {
            let (t, _) = golden(LineCost { p, chart: &chart, x: x.clone(), axis, sign }, half_width)?;
            x[axis] = t;
        }
        let cand = chart.point(&x);
        let pl = pure_loss(p, &cand)?;
        if sign * pl.l > sign * best.l {
            converged = true;
            break;
        }
        let moved = 2.0 * (x[0] * x[0] + x[1] * x[1]).sqrt();
        psi = cand;
        best = pl;
        if moved < 1e-6 {
            converged = true;
            break;
        }
        half_width = (2.0 * moved).max(1e-6);
    }
    Ok((to_point(&psi, best), converged))
}

/// Evaluates `L` on the grid and refines the smallest and largest grid
/// values. The point order follows [`SphereGrid::points`] for any worker
/// count.
pub fn scan_bloch(p: &InstrumentalMatrix, grid: &SphereGrid, workers: usize) -> Result<BlochScan> {
    if p.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: p.dim() });
    }
    let coords = grid.points();
    let points: Vec<BlochPoint> = numerics::with_workers(workers, || {
        coords.par_iter().map(|(t, f)| point_at(p, *t, *f)).collect::<Result<Vec<_>>>()
    })??;
    let pick = |maximize: bool| {
        points
            .iter()
            .filter(|pt| !pt.boundary)
            .min_by(|a, b| {
                let ord = a.l.total_cmp(&b.l);
                if maximize { ord.reverse() } else { ord }
            })
            .or_else(|| points.first())
            .copied()
            .ok_or_else(|| Error::InvalidArgument("empty grid".into()))
    };
    let bracket = grid.resolution_deg.to_radians();
    let (gmin, gmax) = (pick(false)?, pick(true)?);
    let (min, max) = numerics::with_workers(workers, || {
        rayon::join(|| refine(p, &gmin, bracket, false), || refine(p, &gmax, bracket, true))
    })?;
    let ((min, min_ok), (max, max_ok)) = (min?, max?);
    let angles = |pt: &BlochPoint| Angles { theta_deg: pt.theta_deg, phi_deg: pt.phi_deg };
    Ok(BlochScan {
        points,
        extremes: Extremes {
            l_min: min.l,
            l_max: max.l,
            argmin: angles(&min),
            argmax: angles(&max),
            certified: min_ok && max_ok,
            boundary_runs: 0,
            l_max_interior: None,
        },
    })
}

#[derive(Debug, Clone)]
pub struct ExtremalOptions {
    pub restarts: usize,
    pub seed: u64,
    pub workers: usize,
    /// Stop once the best value has been found this many times.
    pub hits_to_stop: usize,
}

impl ExtremalOptions {
    pub fn for_qubits(l: usize) -> Self {
        Self {
            restarts: if l >= 3 { 300 } else { 100 },
            seed: 0,
            workers: 0,
            hits_to_stop: 10,
        }
    }
}

/// Pure state as `(re, im)` amplitude pairs.
pub type StateVector = Vec<[f64; 2]>;

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub l: f64,
    pub state: Vec<Complex64>,
    pub restarts_run: usize,
    pub hits: usize,
    pub boundary_runs: usize,
    /// Best value among searches that stayed away from the boundary.
    pub interior_best: Option<f64>,
}

fn intensity_ratio(p: &InstrumentalMatrix, psi: &[Complex64]) -> Result<f64> {
    let lam = crate::protocol::intensities(p, &DensityMatrix::pure(psi)?)?;
    let max = lam.iter().cloned().fold(0.0, f64::max);
    Ok(lam.iter().cloned().fold(f64::INFINITY, f64::min) / max)
}

struct ChartCost<'a> {
    p: &'a InstrumentalMatrix,
    chart: &'a Chart,
    sign: f64,
}

impl CostFunction for ChartCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let pl = pure_loss(self.p, &self.chart.point(x)).map_err(|e| argmin::core::Error::msg(e.to_string()))?;
        Ok(self.sign * pl.l)
    }
}

fn nelder_mead(p: &InstrumentalMatrix, psi: &[Complex64], step: f64, sign: f64) -> Result<(Vec<Complex64>, f64)> {
    let chart = Chart::new(psi)?;
    let dim = chart.dim();
    let mut simplex = vec![vec![0.0; dim]];
    for k in 0..dim {
        let mut v = vec![0.0; dim];
        v[k] = step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-13).map_err(argmin_error)?;
    let res = Executor::new(ChartCost { p, chart: &chart, sign }, solver)
        .configure(|st| st.max_iters(4000))
        .run()
        .map_err(argmin_error)?;
    let x = res.state().get_best_param().cloned().unwrap_or_else(|| vec![0.0; dim]);
    Ok((chart.point(&x), res.state().get_best_cost()))
}

fn local_search(p: &InstrumentalMatrix, psi: Vec<Complex64>, sign: f64) -> Result<(Vec<Complex64>, f64)> {
    let mut cur = (psi, f64::INFINITY);
    for step in [0.3, 1e-2, 1e-4] {
        let next = nelder_mead(p, &cur.0, step, sign)?;
        if next.1 <= cur.1 {
            cur = next;
        }
    }
    Ok(cur)
}

/// Multi-start Nelder–Mead search for the smallest (or largest) `L` over
/// pure states. Restarts run in fixed-size batches so the result does not
/// depend on the worker count.
pub fn extremal_search(p: &InstrumentalMatrix, opts: &ExtremalOptions, maximize: bool) -> Result<SearchOutcome> {
    const BATCH: usize = 8;
    let s = p.dim();
    let sign = if maximize { -1.0 } else { 1.0 };
    let mut results: Vec<(Vec<Complex64>, f64, bool)> = Vec::new();
    let mut hits = 0;
    let best_of = |rs: &[(Vec<Complex64>, f64, bool)], boundary: bool| {
        rs.iter()
            .filter(|r| r.2 == boundary)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
    };
    while results.len() < opts.restarts {
        let start = results.len();
        let end = (start + BATCH).min(opts.restarts);
        let batch = numerics::with_workers(opts.workers, || {
            (start..end)
                .into_par_iter()
                .map(|i| {
                    let psi0 = states::random_pure(s, mix_seed(opts.seed, i as u64));
                    let (psi, cost) = local_search(p, psi0.matrix().column(0).iter().cloned().collect(), sign)?;
                    let boundary = intensity_ratio(p, &psi)? < BOUNDARY_APPROACH;
                    Ok((psi, cost, boundary))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        results.extend(batch);
        let best = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let tol = 1e-6 * best.abs().max(1.0);
        hits = results.iter().filter(|r| r.1 - best <= tol).count();
        if hits >= opts.hits_to_stop {
            break;
        }
    }
    let boundary_runs = results.iter().filter(|r| r.2).count();
    let interior_best = best_of(&results, false).map(|r| sign * r.1);
    let (state, cost, _) = results
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .ok_or_else(|| Error::InvalidArgument("no restarts requested".into()))?;
    Ok(SearchOutcome {
        l: sign * cost,
        state,
        restarts_run: results.len(),
        hits,
        boundary_runs,
        interior_best,
    })
}

/// Both extremes of `L` over pure states; certified when each best value
/// was re-found `hits_to_stop` times.
pub fn extremal_loss(p: &InstrumentalMatrix, opts: &ExtremalOptions) -> Result<Extremes<StateVector>> {
    let min = extremal_search(p, opts, false)?;
    let max = extremal_search(p, opts, true)?;
    let pairs = |v: &[Complex64]| v.iter().map(|z| [z.re, z.im]).collect();
    Ok(Extremes {
        l_min: min.l,
        l_max: max.l,
        argmin: pairs(&min.state),
        argmax: pairs(&max.state),
        certified: min.hits >= opts.hits_to_stop && max.hits >= opts.hits_to_stop,
        boundary_runs: min.boundary_runs + max.boundary_runs,
        l_max_interior: max.interior_best.filter(|v| (v - max.l).abs() > 1e-6 * max.l.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolyhedronKind;
    use crate::protocol;

    fn single(kind: PolyhedronKind) -> InstrumentalMatrix {
        protocol::polyhedron_protocol(kind, 1).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = SphereGrid::new(1.0).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 181 * 360);
        assert_eq!(pts[0], (0.0, 0.0));
        assert_eq!(*pts.last().unwrap(), (180.0, 359.0));
        assert_eq!(SphereGrid::new(90.0).unwrap().points().len(), 3 * 4);
        assert!(SphereGrid::new(0.0).is_err());
    }

    #[test]
    fn chart_is_orthonormal() {
        let psi = states::random_pure(4, 3);
        let v: Vec<Complex64> = psi.matrix().column(0).iter().cloned().collect();
        let chart = Chart::new(&v).unwrap();
        assert_eq!(chart.dim(), 6);
        let at0 = chart.point(&[0.0; 6]);
        let overlap: Complex64 = at0.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-14);
        for e in &chart.basis {
            assert!((e.norm() - 1.0).abs() < 1e-12);
            assert!((e.adjoint() * &chart.center)[(0, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn boundary_points_are_nudged() {
        let p = single(PolyhedronKind::Cube);
        let pl = bloch_loss(&p, &Direction::new(0.0, 0.0, 1.0)).unwrap();
        assert!(pl.boundary);
        assert!(pl.l.is_finite());
        let pl = bloch_loss(&p, &Direction::new(1.0, 1.0, 1.0)).unwrap();
        assert!(!pl.boundary);
    }

    #[test]
    fn tetrahedron_scan_extremes() {
        let p = single(PolyhedronKind::Tetrahedron);
        let scan = scan_bloch(&p, &SphereGrid::new(5.0).unwrap(), 2).unwrap();
        assert!((scan.extremes.l_min - 1.0).abs() < 1e-6, "{:?}", scan.extremes);
        assert!((scan.extremes.l_max - 1.5).abs() < 1e-6, "{:?}", scan.extremes);
        assert!(scan.extremes.certified);
        let json: serde_json::Value = serde_json::from_str(&scan.extremes_json().unwrap()).unwrap();
        assert!(json["L_max"].is_f64() && json["argmin"]["theta_deg"].is_f64());
        assert!(scan.points.iter().all(|pt| pt.l >= 1.0 - 1e-9));
    }

    #[test]
    fn scan_output_is_worker_independent() {
        let p = single(PolyhedronKind::Octahedron);
        let g = SphereGrid::new(15.0).unwrap();
        let a = scan_bloch(&p, &g, 1).unwrap();
        let b = scan_bloch(&p, &g, 4).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.extremes_json().unwrap(), b.extremes_json().unwrap());
    }

    #[test]
    fn extremal_search_single_qubit() {
        let p = single(PolyhedronKind::Tetrahedron);
        let mut opts = ExtremalOptions::for_qubits(1);
        opts.restarts = 16;
        let ext = extremal_loss(&p, &opts).unwrap();
        assert!((ext.l_max - 1.5).abs() < 1e-6, "{}", ext.l_max);
        assert!((ext.l_min - 1.0).abs() < 1e-6, "{}", ext.l_min);
        assert_eq!(ext.argmax.len(), 2);
    }

    #[test]
    fn extremal_search_is_worker_independent() {
        let p = single(PolyhedronKind::Cube);
        let mut opts = ExtremalOptions::for_qubits(1);
        opts.restarts = 12;
        opts.workers = 1;
        let a = extremal_search(&p, &opts, true).unwrap();
        opts.workers = 3;
        let b = extremal_search(&p, &opts, true).unwrap();
        assert_eq!(a.l.to_bits(), b.l.to_bits());
        assert_eq!(a.restarts_run, b.restarts_run);
    }
}
