//! Chi-squared test of model adequacy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::chi2_sf;
use crate::protocol::InstrumentalMatrix;
use crate::reconstruct::ReconstructionResult;

/// Rows whose fitted expected count is below this are flagged.
pub const LOW_EXPECTATION: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdequacyReport {
    pub statistic: f64,
    pub dof: i64,
    pub p_value: f64,
    pub adequate: bool,
    pub alpha: f64,
    pub low_expectation_rows: Vec<usize>,
}

/// `Σ_j (k_j - μ_j)^2 / μ_j`. A row with `μ_j = 0` and `k_j > 0` makes the
/// statistic infinite; rows with `μ_j = k_j = 0` contribute nothing.
pub fn chi2_statistic(counts: &[f64], expected: &[f64]) -> Result<f64> {
    if counts.len() != expected.len() {
        return Err(Error::DimensionMismatch { expected: expected.len(), got: counts.len() });
    }
    let mut total = 0.0;
    for (k, mu) in counts.iter().zip(expected) {
        if *mu > 0.0 {
            total += (k - mu).powi(2) / mu;
        } else if *k > 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(total)
}

/// Degrees of freedom `m - (2 s - r) r`.
pub fn degrees_of_freedom(m: usize, s: usize, r: usize) -> i64 {
    m as i64 - ((2 * s - r) * r) as i64
}

pub fn adequacy_test(
    p: &InstrumentalMatrix,
    counts: &[f64],
    fit: &ReconstructionResult,
    alpha: f64,
) -> Result<AdequacyReport> {
    let dof = degrees_of_freedom(p.rows(), p.dim(), fit.rank);
    if dof <= 0 {
        return Err(Error::NotTestable { dof });
    }
    let statistic = chi2_statistic(counts, &fit.expected_counts)?;
    let p_value = if statistic.is_finite() { chi2_sf(statistic, dof as u32) } else { 0.0 };
    Ok(AdequacyReport {
        statistic,
        dof,
        p_value,
        adequate: p_value > alpha,
        alpha,
        low_expectation_rows: fit
            .expected_counts
            .iter()
            .enumerate()
            .filter(|(_, mu)| **mu < LOW_EXPECTATION)
            .map(|(j, _)| j)
            .collect(),
    })
}
