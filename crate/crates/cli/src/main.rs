//! `qtomo`: reproducible tomography experiments emitting CSV and JSON.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

/// Invalid input detected after argument parsing; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "qtomo", version, about = "Polyhedron tomography protocols and fidelity-loss statistics")]
struct Cli {
    /// Worker threads for parallel commands (0 = all cores). Output does not
    /// depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Completeness, unity and adequacy report for a polyhedron protocol.
    Protocol {
        polyhedron: String,
        #[arg(default_value_t = 1)]
        qubits: usize,
        /// Also write the protocol itself as JSON.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Scaled loss over pure states: a Bloch-sphere grid for one qubit, a
    /// multi-start extremal search otherwise.
    Scan {
        polyhedron: String,
        #[arg(long, default_value_t = 1)]
        qubits: usize,
        /// Grid step in degrees.
        #[arg(long, default_value_t = 1.0)]
        resolution: f64,
        /// Restarts of the extremal search (default 100 for two qubits,
        /// 300 above).
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grid CSV (`theta_deg,phi_deg,L`).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Extremes JSON; printed to stdout when absent.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Optimal and polyhedron lower bounds on the scaled loss.
    Bounds { qubits: usize, rank: usize },
    /// Poisson counts for a protocol and a true state.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Also write the true state as JSON.
        #[arg(long)]
        state_out: Option<PathBuf>,
    },
    /// Reconstruct a state from a counts CSV.
    Reconstruct {
        polyhedron: String,
        #[arg(long, default_value_t = 1)]
        qubits: usize,
        #[arg(long)]
        counts: PathBuf,
        /// Model rank, or `auto` to select it by the adequacy test.
        #[arg(long, default_value = "auto")]
        rank: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// True state JSON, for reporting the fidelity.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coefficients of the asymptotic loss distribution at a true state.
    Losscoef {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Draws of the loss to write as `loss,z` CSV.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long)]
        samples_out: Option<PathBuf>,
    },
    /// Monte Carlo batch: simulate, reconstruct and compare with theory.
    Mc {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Draws from the theoretical distribution for the KS comparison.
        #[arg(long, default_value_t = 100_000)]
        reference_draws: usize,
    },
    /// Chi-squared adequacy of a rank-r fit to a counts CSV.
    Adequacy {
        polyhedron: String,
        #[arg(long, default_value_t = 1)]
        qubits: usize,
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Experiment settings; flags override values from `--config`.
#[derive(Args, Debug, Clone)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    polyhedron: Option<String>,
    #[arg(long)]
    qubits: Option<usize>,
    /// pure-random, ghz, bell or white-noise-mix.
    #[arg(long)]
    state: Option<String>,
    /// White-noise weight.
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    state_seed: Option<u64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long = "n")]
    sample_size: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(self) -> anyhow::Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(base.overridden_by(ExperimentConfig {
            polyhedron: self.polyhedron,
            qubits: self.qubits,
            state: self.state,
            f: self.f,
            state_seed: self.state_seed,
            rank: self.rank,
            sample_size: self.sample_size,
            runs: self.runs,
            seed: self.seed,
            alpha: self.alpha,
            out_csv: self.out_csv,
            out_json: self.out_json,
        }))
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let workers = cli.workers;
    match cli.command {
        Command::Protocol { polyhedron, qubits, export } => commands::protocol(&polyhedron, qubits, export.as_deref()),
        Command::Scan { polyhedron, qubits, resolution, restarts, seed, csv, json } => {
            commands::scan(&polyhedron, qubits, resolution, restarts, seed, workers, csv.as_deref(), json.as_deref())
        }
        Command::Bounds { qubits, rank } => commands::bounds(qubits, rank),
        Command::Simulate { exp, state_out } => commands::simulate(&exp.resolve()?, state_out.as_deref()),
        Command::Reconstruct { polyhedron, qubits, counts, rank, alpha, truth, out } => commands::reconstruct(
            &polyhedron,
            qubits,
            &counts,
            &rank,
            alpha,
            truth.as_deref(),
            out.as_deref(),
        ),
        Command::Losscoef { exp, samples, samples_out } => {
            commands::losscoef(&exp.resolve()?, samples, samples_out.as_deref())
        }
        Command::Mc { exp, reference_draws } => commands::mc(&exp.resolve()?, reference_draws, workers),
        Command::Adequacy { polyhedron, qubits, counts, rank, alpha, out } => {
            commands::adequacy(&polyhedron, qubits, &counts, rank, alpha, out.as_deref())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<qtomo_core::Error>() {
        Some(qtomo_core::Error::InvalidArgument(_))
        | Some(qtomo_core::Error::DimensionMismatch { .. })
        | Some(qtomo_core::Error::MemoryCap { .. })
        | Some(qtomo_core::Error::Json(_))
        | Some(qtomo_core::Error::NotTestable { .. })
        | Some(qtomo_core::Error::RankDeficit { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
