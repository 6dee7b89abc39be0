//! Poisson count simulation and Monte Carlo batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::adequacy;
use crate::error::{Error, Result};
use crate::numerics::{self, mix_seed};
use crate::protocol::{self, InstrumentalMatrix};
use crate::reconstruct::{self, MleOptions};
use crate::states::{self, DensityMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub counts: Vec<u64>,
    pub times: Vec<f64>,
    pub label: String,
    pub seed: u64,
}

impl CountRecord {
    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&k| k as f64).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with columns `row,count,time,lambda_hat`, where
    /// `lambda_hat = count / time`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,count,time,lambda_hat\n");
        for (j, (k, t)) in self.counts.iter().zip(&self.times).enumerate() {
            out.push_str(&format!("{j},{k},{t:.16e},{:.16e}\n", *k as f64 / t));
        }
        out
    }

    /// Reads the `to_csv` layout; `lambda_hat` and any further columns are
    /// ignored.
    pub fn from_csv(text: &str, label: impl Into<String>, seed: u64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            row: usize,
            count: u64,
            time: f64,
        }
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
        let mut counts = Vec::new();
        let mut times = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::InvalidArgument(format!("counts CSV: {e}")))?;
            if row.row != i {
                return Err(Error::InvalidArgument(format!("counts CSV: row index {} where {i} was expected", row.row)));
            }
            counts.push(row.count);
            times.push(row.time);
        }
        Ok(Self { counts, times, label: label.into(), seed })
    }
}

/// Poisson variate: inversion for small means, the PTRD transformed
/// rejection method otherwise.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 30.0 {
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        let u: f64 = rng.random();
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            let next = cdf + p;
            if next == cdf {
                break;
            }
            cdf = next;
        }
        return k;
    }
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let invalpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if (v * invalpha / (a / (us * us) + b)).ln() <= -mean + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// Expected counts `t_j λ_j`.
pub fn expected_counts(p: &InstrumentalMatrix, rho: &DensityMatrix) -> Result<Vec<f64>> {
    let lam = protocol::intensities(p, rho)?;
    Ok(lam.iter().zip(p.times()).map(|(l, t)| l * t).collect())
}

/// Independent Poisson counts for every row of `p`.
pub fn simulate_counts(p: &InstrumentalMatrix, rho: &DensityMatrix, seed: u64) -> Result<CountRecord> {
    let means = expected_counts(p, rho)?;
    if let Some(m) = means.iter().find(|m| !m.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite expected count {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = means.iter().map(|&m| sample_poisson(&mut rng, m)).collect();
    Ok(CountRecord {
        counts,
        times: p.times().to_vec(),
        label: p.label().to_string(),
        seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchRun {
    pub index: usize,
    pub seed: u64,
    /// `1 - F(ρ0, ρ̂)`, or `None` when the reconstruction failed.
    pub loss: Option<f64>,
    /// Pearson statistic of the counts against the fitted expectations.
    pub chi2: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub rank: usize,
    pub n: f64,
    pub runs: usize,
    pub seed: u64,
    /// Thread count; `0` uses the global pool.
    pub workers: usize,
    pub mle: MleOptions,
}

/// Runs `runs` independent simulate-and-reconstruct cycles. Run `i` uses
/// the child seed `mix_seed(seed, i)`, so results do not depend on the
/// number of workers.
pub fn run_batch(p: &InstrumentalMatrix, rho: &DensityMatrix, cfg: &BatchConfig) -> Result<Vec<BatchRun>> {
    let timed = protocol::set_times_for_sample(p, rho, cfg.n)?;
    let one = |i: usize| -> BatchRun {
        let seed = mix_seed(cfg.seed, i as u64);
        let outcome = simulate_counts(&timed, rho, seed).and_then(|rec| {
            let opts = MleOptions { seed, ..cfg.mle.clone() };
            let k = rec.as_f64();
            let res = reconstruct::mle(&timed, &k, cfg.rank, &opts)?;
            let chi2 = adequacy::chi2_statistic(&k, &res.expected_counts)?;
            Ok((states::fidelity_loss(rho, &res.rho_hat)?, chi2, res.converged, res.iterations))
        });
        match outcome {
            Ok((loss, chi2, converged, iterations)) => BatchRun {
                index: i,
                seed,
                loss: Some(loss),
                chi2: Some(chi2),
                converged,
                iterations,
                error: None,
            },
            Err(e) => BatchRun {
                index: i,
                seed,
                loss: None,
                chi2: None,
                converged: false,
                iterations: 0,
                error: Some(e.to_string()),
            },
        }
    };
    numerics::with_workers(cfg.workers, || (0..cfg.runs).into_par_iter().map(one).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolyhedronKind;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn poisson_moments_both_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for mean in [0.3, 4.0, 29.0, 31.0, 250.0, 1e5] {
            let xs: Vec<f64> = (0..100_000).map(|_| sample_poisson(&mut rng, mean) as f64).collect();
            let (m, v) = moments(&xs);
            let se = (mean / 1e5).sqrt();
            assert!((m - mean).abs() < 5.0 * se, "mean {mean}: {m}");
            assert!((v / mean - 1.0).abs() < 0.03, "mean {mean}: var {v}");
        }
    }

    #[test]
    fn poisson_mean_and_variance_within_five_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000.0;
        for mean in [0.1, 1.0, 100.0, 1e5] {
            let xs: Vec<f64> = (0..draws as usize).map(|_| sample_poisson(&mut rng, mean) as f64).collect();
            let (m, v) = moments(&xs);
            assert!((m - mean).abs() < 5.0 * (mean / draws).sqrt(), "mean {mean}: {m}");
            // Var of the sample variance for Poisson: (λ + 2λ²) / N.
            let se_v = ((mean + 2.0 * mean * mean) / draws).sqrt();
            assert!((v - mean).abs() < 5.0 * se_v, "mean {mean}: var {v}");
        }
    }

    #[test]
    fn expected_counts_white_noise_tetrahedron() {
        let rho = DensityMatrix::maximally_mixed(2);
        let p = protocol::set_times_for_sample(&protocol::polyhedron_protocol(PolyhedronKind::Tetrahedron, 1).unwrap(), &rho, 1e6)
            .unwrap();
        for mu in expected_counts(&p, &rho).unwrap() {
            assert!((mu - 2.5e5).abs() < 1e-6, "{mu}");
        }
    }

    #[test]
    fn poisson_pmf_large_mean() {
        // Chi-squared goodness of fit against the exact pmf around the mode.
        let mean = 40.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 200_000;
        let mut hist = vec![0u64; 120];
        for _ in 0..draws {
            let k = sample_poisson(&mut rng, mean) as usize;
            hist[k.min(119)] += 1;
        }
        let pmf = |k: f64| (-mean + k * mean.ln() - ln_gamma(k + 1.0)).exp();
        let mut chi2 = 0.0;
        let mut cells = 0;
        for k in 25..56 {
            let e = pmf(k as f64) * draws as f64;
            chi2 += (hist[k] as f64 - e).powi(2) / e;
            cells += 1;
        }
        let p = crate::numerics::chi2_sf(chi2, cells);
        assert!(p > 1e-3, "chi2 {chi2} p {p}");
    }

    #[test]
    fn zero_mean_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_poisson(&mut rng, 0.0), 0);
    }

    #[test]
    fn simulation_is_deterministic() {
        let rho = states::random_pure(2, 3).density();
        let p = protocol::set_times_for_sample(&protocol::polyhedron_protocol(PolyhedronKind::Cube, 1).unwrap(), &rho, 1e4).unwrap();
        let a = simulate_counts(&p, &rho, 42).unwrap();
        let b = simulate_counts(&p, &rho, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.counts, simulate_counts(&p, &rho, 43).unwrap().counts);
    }

    #[test]
    fn csv_round_trip() {
        let rec = CountRecord { counts: vec![3, 0, 17], times: vec![0.5, 1.0, 1.0 / 3.0], label: "x".into(), seed: 9 };
        let text = rec.to_csv();
        assert!(text.starts_with("row,count,time,lambda_hat\n"));
        let back = CountRecord::from_csv(&text, "x", 9).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn batch_is_worker_independent() {
        let rho = states::random_pure(2, 8).density();
        let p = protocol::polyhedron_protocol(PolyhedronKind::Octahedron, 1).unwrap();
        let cfg = |workers| BatchConfig { rank: 1, n: 1e4, runs: 12, seed: 5, workers, mle: MleOptions::default() };
        let a = run_batch(&p, &rho, &cfg(1)).unwrap();
        let b = run_batch(&p, &rho, &cfg(3)).unwrap();
        let la: Vec<_> = a.iter().map(|r| r.loss.unwrap().to_bits()).collect();
        let lb: Vec<_> = b.iter().map(|r| r.loss.unwrap().to_bits()).collect();
        assert_eq!(la, lb);
    }
}
