use std::path::Path;

use anyhow::{bail, Context, Result};
use qtomo_core::lossdist::{self, DistributionSummary};
use qtomo_core::numerics::{self, mix_seed};
use qtomo_core::reconstruct::{self, AutoOptions, ReconstructionReport};
use qtomo_core::scan::{self, ExtremalOptions, SphereGrid};
use qtomo_core::simulate::{self, BatchConfig};
use qtomo_core::{adequacy, protocol, states, CountRecord, MleOptions, PolyhedronKind};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::UsageError;

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn parse_kind(name: &str) -> Result<PolyhedronKind> {
    name.parse().map_err(|e: qtomo_core::Error| UsageError(e.to_string()).into())
}

fn read_counts(path: &Path, p: &qtomo_core::InstrumentalMatrix) -> Result<(CountRecord, qtomo_core::InstrumentalMatrix)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let record = CountRecord::from_csv(&text, p.label(), 0).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    if record.counts.len() != p.rows() {
        bail!(UsageError(format!(
            "{} has {} rows, the protocol has {}",
            path.display(),
            record.counts.len(),
            p.rows()
        )));
    }
    let timed = p.with_times(record.times.clone())?;
    Ok((record, timed))
}

#[derive(Serialize)]
struct DofEntry {
    r: usize,
    dof: i64,
    redundant: bool,
}

#[derive(Serialize)]
struct ProtocolReport {
    label: String,
    qubits: usize,
    m: usize,
    s: usize,
    q: usize,
    complete: bool,
    unity_i0: Option<f64>,
    singular_values: Vec<f64>,
    adequacy: Vec<DofEntry>,
}

pub fn protocol(name: &str, qubits: usize, export: Option<&Path>) -> Result<()> {
    if qubits == 0 {
        bail!(UsageError("qubits must be at least 1".into()));
    }
    let p = protocol::polyhedron_protocol(parse_kind(name)?, qubits)?;
    let c = protocol::completeness(&p)?;
    let adequacy = (1..=p.dim())
        .map(|r| {
            let a = protocol::adequacy_possible(&p, r)?;
            Ok(DofEntry { r, dof: a.dof, redundant: a.redundant })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = ProtocolReport {
        label: p.label().to_string(),
        qubits,
        m: p.rows(),
        s: p.dim(),
        q: c.q,
        complete: c.complete,
        unity_i0: protocol::unity_decomposition(&p).intensity(),
        singular_values: c.singular_values,
        adequacy,
    };
    if let Some(path) = export {
        emit(Some(path), &protocol::to_json(&p)?)?;
    }
    emit(None, &to_json(&report)?)
}

#[allow(clippy::too_many_arguments)]
pub fn scan(
    name: &str,
    qubits: usize,
    resolution: f64,
    restarts: Option<usize>,
    seed: u64,
    workers: usize,
    csv: Option<&Path>,
    json: Option<&Path>,
) -> Result<()> {
    let kind = parse_kind(name)?;
    if qubits == 0 {
        bail!(UsageError("qubits must be at least 1".into()));
    }
    let p = protocol::polyhedron_protocol(kind, qubits)?;
    if qubits == 1 {
        if !(0.1..=10.0).contains(&resolution) {
            bail!(UsageError(format!("resolution must lie in [0.1, 10] degrees, got {resolution}")));
        }
        let result = scan::scan_bloch(&p, &SphereGrid::new(resolution)?, workers)?;
        if let Some(path) = csv {
            emit(Some(path), &result.to_csv())?;
        }
        emit(json, &(result.extremes_json()? + "\n"))
    } else {
        if csv.is_some() {
            bail!(UsageError("grid CSV is only available for one qubit".into()));
        }
        let mut opts = ExtremalOptions::for_qubits(qubits);
        opts.seed = seed;
        opts.workers = workers;
        if let Some(r) = restarts {
            opts.restarts = r;
        }
        emit(json, &to_json(&scan::extremal_loss(&p, &opts)?)?)
    }
}

#[derive(Serialize)]
struct BoundsReport {
    qubits: usize,
    s: usize,
    rank: usize,
    optimal_min: f64,
    polyhedron_mixed_min: f64,
    ratio: f64,
}

pub fn bounds(qubits: usize, rank: usize) -> Result<()> {
    if qubits == 0 || qubits > 30 {
        bail!(UsageError(format!("qubits must lie in 1..=30, got {qubits}")));
    }
    let s = 1usize << qubits;
    let optimal_min = lossdist::optimal_min_loss(s, rank).map_err(|e| UsageError(e.to_string()))?;
    let polyhedron_mixed_min = lossdist::polyhedron_mixed_min(qubits);
    emit(
        None,
        &to_json(&BoundsReport {
            qubits,
            s,
            rank,
            optimal_min,
            polyhedron_mixed_min,
            ratio: polyhedron_mixed_min / optimal_min,
        })?,
    )
}

pub fn simulate(cfg: &ExperimentConfig, state_out: Option<&Path>) -> Result<()> {
    let rho = cfg.true_state()?;
    let p = protocol::set_times_for_sample(&cfg.protocol()?, &rho, cfg.sample_size()?)?;
    let record = simulate::simulate_counts(&p, &rho, cfg.seed.unwrap_or(0))?;
    if let Some(path) = state_out {
        emit(Some(path), &states::to_json(&rho)?)?;
    }
    emit(cfg.out_csv.as_deref(), &record.to_csv())
}

#[derive(Serialize)]
struct CandidateReport {
    rank: usize,
    loglik: f64,
    converged: bool,
    adequacy: Option<adequacy::AdequacyReport>,
}

#[derive(Serialize)]
struct AutoReport {
    selected_rank: usize,
    adequate: Option<bool>,
    result: ReconstructionReport,
    candidates: Vec<CandidateReport>,
}

pub fn reconstruct(
    name: &str,
    qubits: usize,
    counts: &Path,
    rank: &str,
    alpha: f64,
    truth: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let p = protocol::polyhedron_protocol(parse_kind(name)?, qubits)?;
    let (record, timed) = read_counts(counts, &p)?;
    let k = record.as_f64();
    let truth = match truth {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(states::from_json(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let text = if rank == "auto" {
        let auto = reconstruct::reconstruct_auto(&timed, &k, &AutoOptions { alpha, ..AutoOptions::default() })?;
        to_json(&AutoReport {
            selected_rank: auto.selected,
            adequate: auto.adequate,
            result: auto.result.report(truth.as_ref())?,
            candidates: auto
                .candidates
                .into_iter()
                .map(|c| CandidateReport {
                    rank: c.rank,
                    loglik: c.result.loglik,
                    converged: c.result.converged,
                    adequacy: c.report,
                })
                .collect(),
        })?
    } else {
        let r: usize = rank.parse().map_err(|_| UsageError(format!("rank must be a number or 'auto', got '{rank}'")))?;
        let result = reconstruct::mle(&timed, &k, r, &MleOptions::default())?;
        to_json(&result.report(truth.as_ref())?)?
    };
    emit(out, &text)
}

pub fn losscoef(cfg: &ExperimentConfig, samples: usize, samples_out: Option<&Path>) -> Result<()> {
    let rho = cfg.true_state()?;
    let r = cfg.rank(&rho)?;
    let coef = lossdist::loss_coefficients(&cfg.protocol()?, &rho, r, cfg.sample_size()?)?;
    if let Some(path) = cfg.out_csv.as_deref() {
        emit(Some(path), &coef.to_csv())?;
    }
    if samples > 0 {
        let path = samples_out.ok_or_else(|| UsageError("--samples needs --samples-out".into()))?;
        let mut text = String::from("loss,z\n");
        for x in lossdist::sample_loss(&coef.d, samples, cfg.seed.unwrap_or(0)) {
            text.push_str(&format!("{x:.16e},{:.16e}\n", lossdist::nines(1.0 - x)));
        }
        emit(Some(path), &text)?;
    }
    emit(cfg.out_json.as_deref(), &to_json(&coef.summary()?)?)
}

#[derive(Serialize)]
struct Moments {
    mean: f64,
    variance: f64,
    skewness: Option<f64>,
    excess: Option<f64>,
}

fn sample_moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let variance = if xs.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    let (skewness, excess) = if m2 > 0.0 { (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0)) } else { (None, None) };
    Moments { mean, variance, skewness, excess }
}

#[derive(Serialize)]
struct KsReport {
    statistic: f64,
    p_value: f64,
}

#[derive(Serialize)]
struct Chi2Fit {
    dof: i64,
    mean: f64,
    ks: Option<KsReport>,
}

#[derive(Serialize)]
struct McSummary {
    label: String,
    n: f64,
    rank: usize,
    runs: usize,
    failed: usize,
    not_converged: usize,
    empirical: Option<Moments>,
    theoretical: Option<DistributionSummary>,
    theoretical_error: Option<String>,
    /// Two-sample KS of the losses against draws from the theory.
    goodness_of_fit: Option<KsReport>,
    chi2: Option<Chi2Fit>,
}

pub fn mc(cfg: &ExperimentConfig, reference_draws: usize, workers: usize) -> Result<()> {
    let rho = cfg.true_state()?;
    let r = cfg.rank(&rho)?;
    let n = cfg.sample_size()?;
    let p = cfg.protocol()?;
    let seed = cfg.seed.unwrap_or(0);
    let batch = BatchConfig { rank: r, n, runs: cfg.runs()?, seed, workers, mle: MleOptions::default() };
    let runs = simulate::run_batch(&p, &rho, &batch)?;

    let mut csv = String::from("run,seed,loss,z,chi2,converged,iterations\n");
    let mut losses = Vec::new();
    let mut chi2s = Vec::new();
    let mut failed = 0;
    for run in &runs {
        match (run.loss, run.chi2) {
            (Some(loss), Some(chi2)) => {
                csv.push_str(&format!(
                    "{},{},{loss:.16e},{:.16e},{chi2:.16e},{},{}\n",
                    run.index,
                    run.seed,
                    lossdist::nines(1.0 - loss),
                    run.converged,
                    run.iterations
                ));
                losses.push(loss);
                chi2s.push(chi2);
            }
            _ => {
                failed += 1;
                eprintln!("run {} (seed {}) failed: {}", run.index, run.seed, run.error.as_deref().unwrap_or("unknown"));
            }
        }
    }

    let (theoretical, theoretical_error, goodness_of_fit) = match lossdist::loss_coefficients(&p, &rho, r, n) {
        Ok(coef) => {
            let fit = if losses.is_empty() || reference_draws == 0 {
                None
            } else {
                let reference = lossdist::sample_loss(&coef.d, reference_draws, mix_seed(seed, u64::MAX));
                let ks = numerics::ks_two_sample(&losses, &reference);
                Some(KsReport { statistic: ks.statistic, p_value: ks.p_value })
            };
            (Some(coef.summary()?), None, fit)
        }
        Err(e) => (None, Some(e.to_string()), None),
    };
    let dof = adequacy::degrees_of_freedom(p.rows(), p.dim(), r);
    let chi2 = (!chi2s.is_empty()).then(|| Chi2Fit {
        dof,
        mean: chi2s.iter().sum::<f64>() / chi2s.len() as f64,
        ks: (dof > 0).then(|| {
            let ks = numerics::ks_one_sample(&chi2s, |x| numerics::chi2_cdf(x, dof as u32));
            KsReport { statistic: ks.statistic, p_value: ks.p_value }
        }),
    });
    let summary = McSummary {
        label: p.label().to_string(),
        n,
        rank: r,
        runs: runs.len(),
        failed,
        not_converged: runs.iter().filter(|r| r.loss.is_some() && !r.converged).count(),
        empirical: (!losses.is_empty()).then(|| sample_moments(&losses)),
        theoretical,
        theoretical_error,
        goodness_of_fit,
        chi2,
    };
    if let Some(path) = cfg.out_csv.as_deref() {
        emit(Some(path), &csv)?;
    }
    emit(cfg.out_json.as_deref(), &to_json(&summary)?)
}

pub fn adequacy(name: &str, qubits: usize, counts: &Path, rank: usize, alpha: f64, out: Option<&Path>) -> Result<()> {
    let p = protocol::polyhedron_protocol(parse_kind(name)?, qubits)?;
    let (record, timed) = read_counts(counts, &p)?;
    let k = record.as_f64();
    let fit = reconstruct::mle(&timed, &k, rank, &MleOptions::default())?;
    let report = adequacy::adequacy_test(&timed, &k, &fit, alpha)?;
    emit(out, &to_json(&report)?)
}
