//! Instrumental matrices, intensity operators and the measurement matrix.
//!
//! A protocol is an `m x s` complex matrix `X` whose rows are the states
//! projected on, together with per-row exposure times `t_j`. Row `j`
//! defines the intensity operator `Λ_j = X_j^† X_j` and the expected count
//! `t_j tr(Λ_j ρ)`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{direction_to_qubit, face_directions, PolyhedronKind};
use crate::numerics::{self, ComplexMatrix, ComplexVector, RANK_TOL};
use crate::states::DensityMatrix;

/// Default cap on the number of entries of a tensor-power instrumental
/// matrix (`m^l * 2^l`).
pub const DEFAULT_TENSOR_CAP: usize = 1 << 30;

/// Cap on the number of entries of the measurement matrix (`m * s^2`).
pub const MEASUREMENT_MATRIX_CAP: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentalMatrix {
    x: ComplexMatrix,
    times: Vec<f64>,
    qubits: usize,
    label: String,
}

impl InstrumentalMatrix {
    pub fn new(x: ComplexMatrix, times: Vec<f64>, qubits: usize, label: impl Into<String>) -> Result<Self> {
        let (m, s) = x.shape();
        if m == 0 {
            return Err(Error::InvalidArgument("protocol needs at least one row".into()));
        }
        if qubits == 0 || qubits >= usize::BITS as usize || s != 1usize << qubits {
            return Err(Error::DimensionMismatch {
                expected: 1usize.checked_shl(qubits as u32).unwrap_or(0),
                got: s,
            });
        }
        if times.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: times.len() });
        }
        if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidArgument(format!("exposure time {t} is not positive")));
        }
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite protocol entry".into()));
        }
        Ok(Self {
            x,
            times,
            qubits,
            label: label.into(),
        })
    }

    /// Protocol with unit exposure times.
    pub fn from_rows(rows: &[Vec<Complex64>], qubits: usize, label: impl Into<String>) -> Result<Self> {
        let s = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidArgument("ragged protocol rows".into()));
        }
        let x = ComplexMatrix::from_fn(rows.len(), s, |i, j| rows[i][j]);
        Self::new(x, vec![1.0; rows.len()], qubits, label)
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.x
    }

    pub fn row(&self, j: usize) -> Vec<Complex64> {
        self.x.row(j).iter().copied().collect()
    }

    pub fn with_times(&self, times: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), times, self.qubits, self.label.clone())
    }

    pub fn with_uniform_time(&self, t: f64) -> Result<Self> {
        self.with_times(vec![t; self.rows()])
    }

    /// `I = Σ_j t_j Λ_j = X^† diag(t) X`.
    pub fn frame_operator(&self) -> ComplexMatrix {
        let mut tx = self.x.clone();
        for (j, t) in self.times.iter().enumerate() {
            tx.row_mut(j).scale_mut(*t);
        }
        self.x.adjoint() * tx
    }
}

/// Intensity operator of one protocol row, or a weighted mixture of
/// projectors for which only the total statistics are recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityOperator {
    pub matrix: ComplexMatrix,
    pub components: Vec<(f64, Vec<Complex64>)>,
}

impl IntensityOperator {
    pub fn projector(row: &[Complex64]) -> Self {
        Self {
            matrix: numerics::row_outer(row),
            components: vec![(1.0, row.to_vec())],
        }
    }

    pub fn mixture(components: Vec<(f64, Vec<Complex64>)>) -> Result<Self> {
        let s = components
            .first()
            .map(|c| c.1.len())
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let mut matrix = ComplexMatrix::zeros(s, s);
        for (f, row) in &components {
            if row.len() != s {
                return Err(Error::DimensionMismatch { expected: s, got: row.len() });
            }
            if !(*f > 0.0) {
                return Err(Error::InvalidArgument(format!("mixture weight {f} is not positive")));
            }
            matrix += numerics::row_outer(row).scale(*f);
        }
        Ok(Self { matrix, components })
    }

    /// `Λ^2 = Λ` within `tol`.
    pub fn is_projector(&self, tol: f64) -> bool {
        (&self.matrix * &self.matrix - &self.matrix).norm() <= tol
    }

    /// `tr(Λ ρ)`.
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        let r = rho.matrix();
        if r.nrows() != self.matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.nrows(),
                got: r.nrows(),
            });
        }
        Ok(self.matrix.component_mul(&r.transpose()).iter().sum::<Complex64>().re)
    }
}

#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    pub b: ComplexMatrix,
}

impl MeasurementMatrix {
    /// `B vec(ρ)`, with column-stacking vectorization.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexVector {
        &self.b * numerics::vec_columns(rho)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Unity {
    /// `Σ t_j Λ_j = I_0 E`.
    Holds(f64),
    NotUnity { residual: f64 },
}

impl Unity {
    pub fn intensity(&self) -> Option<f64> {
        match self {
            Unity::Holds(i0) => Some(*i0),
            Unity::NotUnity { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Completeness {
    pub q: usize,
    pub complete: bool,
    pub singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AdequacyCheck {
    pub redundant: bool,
    pub dof: i64,
}

pub fn single_qubit_protocol(kind: PolyhedronKind) -> InstrumentalMatrix {
    let rows: Vec<Vec<Complex64>> = face_directions(kind)
        .iter()
        .map(|u| direction_to_qubit(u).iter().map(|z| z.conj()).collect())
        .collect();
    InstrumentalMatrix::from_rows(&rows, 1, kind.name()).expect("catalog protocol is valid")
}

/// `l`-fold tensor power with rows in lexicographic order (first factor
/// most significant).
pub fn tensor_power(p: &InstrumentalMatrix, l: usize) -> Result<InstrumentalMatrix> {
    tensor_power_with_cap(p, l, DEFAULT_TENSOR_CAP)
}

pub fn tensor_power_with_cap(p: &InstrumentalMatrix, l: usize, cap: usize) -> Result<InstrumentalMatrix> {
    if p.qubits() != 1 {
        return Err(Error::InvalidArgument("tensor_power expects a single-qubit protocol".into()));
    }
    if l == 0 {
        return Err(Error::InvalidArgument("tensor power l must be at least 1".into()));
    }
    if l == 1 {
        return Ok(p.clone());
    }
    let m = p.rows();
    let rows = m.checked_pow(l as u32);
    let cols = 1usize.checked_shl(l as u32);
    let entries = rows.zip(cols).and_then(|(r, c)| r.checked_mul(c));
    match entries {
        Some(e) if e <= cap => {}
        _ => {
            return Err(Error::MemoryCap {
                rows: rows.unwrap_or(usize::MAX),
                cols: cols.unwrap_or(usize::MAX),
                cap,
            })
        }
    }
    let mut x = p.matrix().clone();
    let mut times = p.times().to_vec();
    for _ in 1..l {
        x = x.kronecker(p.matrix());
        times = times
            .iter()
            .flat_map(|a| p.times().iter().map(move |b| a * b))
            .collect();
    }
    let label = format!("{}^{}", p.label(), l);
    InstrumentalMatrix::new(x, times, l, label)
}

pub fn polyhedron_protocol(kind: PolyhedronKind, qubits: usize) -> Result<InstrumentalMatrix> {
    tensor_power(&single_qubit_protocol(kind), qubits)
}

pub fn intensity_operator(p: &InstrumentalMatrix, j: usize) -> Result<IntensityOperator> {
    if j >= p.rows() {
        return Err(Error::InvalidArgument(format!("row {j} out of range 0..{}", p.rows())));
    }
    Ok(IntensityOperator::projector(&p.row(j)))
}

/// `M_j = Σ_l X_jl c_l`.
pub fn amplitudes(p: &InstrumentalMatrix, c: &ComplexVector) -> Result<ComplexVector> {
    if c.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: c.len() });
    }
    Ok(p.matrix() * c)
}

/// `λ_j = tr(Λ_j ρ)`, clipped at zero.
pub fn intensities(p: &InstrumentalMatrix, rho: &DensityMatrix) -> Result<Vec<f64>> {
    raw_intensities(p, rho.matrix())
}

pub(crate) fn raw_intensities(p: &InstrumentalMatrix, rho: &ComplexMatrix) -> Result<Vec<f64>> {
    if rho.nrows() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: rho.nrows() });
    }
    let xr = p.matrix() * rho;
    Ok((0..p.rows())
        .map(|j| {
            let v: Complex64 = xr
                .row(j)
                .iter()
                .zip(p.matrix().row(j).iter())
                .map(|(a, b)| a * b.conj())
                .sum();
            v.re.max(0.0)
        })
        .collect())
}

/// Uniform exposure time such that `Σ_j λ_j t_j = n`.
pub fn set_times_for_sample(p: &InstrumentalMatrix, rho: &DensityMatrix, n: f64) -> Result<InstrumentalMatrix> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidArgument(format!("sample size {n} must be positive")));
    }
    let total: f64 = intensities(p, rho)?.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateState);
    }
    p.with_uniform_time(n / total)
}

/// Rescales the existing times so that `Σ_j λ_j t_j = n`.
pub fn scale_times_for_sample(p: &InstrumentalMatrix, rho: &DensityMatrix, n: f64) -> Result<InstrumentalMatrix> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidArgument(format!("sample size {n} must be positive")));
    }
    let lambda = intensities(p, rho)?;
    let total: f64 = lambda.iter().zip(p.times()).map(|(l, t)| l * t).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateState);
    }
    let k = n / total;
    p.with_times(p.times().iter().map(|t| t * k).collect())
}

pub fn unity_decomposition(p: &InstrumentalMatrix) -> Unity {
    let frame = p.frame_operator();
    let s = p.dim();
    let i0 = numerics::trace(&frame).re / s as f64;
    let residual = (frame - ComplexMatrix::identity(s, s).scale(i0)).norm();
    if residual <= 1e-9 * i0.abs() {
        Unity::Holds(i0)
    } else {
        Unity::NotUnity { residual }
    }
}

/// Rows `B_j = t_j X_j^* ⊗ X_j`.
pub fn measurement_matrix(p: &InstrumentalMatrix) -> Result<MeasurementMatrix> {
    let (m, s) = (p.rows(), p.dim());
    let cols = s * s;
    if m.saturating_mul(cols) > MEASUREMENT_MATRIX_CAP {
        return Err(Error::MemoryCap { rows: m, cols, cap: MEASUREMENT_MATRIX_CAP });
    }
    let x = p.matrix();
    let b = ComplexMatrix::from_fn(m, cols, |j, k| {
        let (a, bcol) = (k % s, k / s);
        x[(j, bcol)].conj() * x[(j, a)] * p.times()[j]
    });
    Ok(MeasurementMatrix { b })
}

pub fn completeness(p: &InstrumentalMatrix) -> Result<Completeness> {
    let b = measurement_matrix(p)?;
    let dec = numerics::svd(&b.b)?;
    let q = dec.rank(RANK_TOL);
    let s2 = p.dim() * p.dim();
    Ok(Completeness {
        q,
        complete: q == s2,
        singular_values: dec.singular_values.iter().copied().collect(),
    })
}

/// Degrees of freedom `m - (2s - r) r` of the adequacy test for rank `r`.
pub fn adequacy_possible(p: &InstrumentalMatrix, r: usize) -> Result<AdequacyCheck> {
    let s = p.dim();
    if r == 0 || r > s {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={s}")));
    }
    let dof = p.rows() as i64 - ((2 * s - r) * r) as i64;
    Ok(AdequacyCheck { redundant: dof > 0, dof })
}

/// JSON form: rows hold `s` `[re, im]` pairs each.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProtocolFile {
    pub label: String,
    pub qubits: usize,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<[f64; 2]>>,
}

impl From<&InstrumentalMatrix> for ProtocolFile {
    fn from(p: &InstrumentalMatrix) -> Self {
        ProtocolFile {
            label: p.label.clone(),
            qubits: p.qubits,
            times: p.times.clone(),
            rows: (0..p.rows())
                .map(|j| p.x.row(j).iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

impl TryFrom<ProtocolFile> for InstrumentalMatrix {
    type Error = Error;

    fn try_from(f: ProtocolFile) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = f
            .rows
            .iter()
            .map(|r| r.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
            .collect();
        let s = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidArgument("ragged protocol rows".into()));
        }
        let x = ComplexMatrix::from_fn(rows.len(), s, |i, j| rows[i][j]);
        InstrumentalMatrix::new(x, f.times, f.qubits, f.label)
    }
}

pub fn to_json(p: &InstrumentalMatrix) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ProtocolFile::from(p))?)
}

pub fn from_json(text: &str) -> Result<InstrumentalMatrix> {
    let f: ProtocolFile = serde_json::from_str(text)?;
    f.try_into()
}

/// Singular values of `B`, descending.
pub fn singular_values(p: &InstrumentalMatrix) -> Result<DVector<f64>> {
    Ok(numerics::svd(&measurement_matrix(p)?.b)?.singular_values)
}
