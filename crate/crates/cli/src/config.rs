//! Experiment configuration shared by the file-driven commands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qtomo_core::{protocol, states, DensityMatrix, InstrumentalMatrix, PolyhedronKind};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// One experiment per file. Every field can be overridden from the
/// command line.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub polyhedron: Option<String>,
    pub qubits: Option<usize>,
    /// `pure-random`, `ghz`, `bell` or `white-noise-mix`.
    pub state: Option<String>,
    /// White-noise weight for `white-noise-mix`.
    pub f: Option<f64>,
    /// Seed for `pure-random`.
    pub state_seed: Option<u64>,
    pub rank: Option<usize>,
    pub sample_size: Option<f64>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    /// Values present in `other` replace those in `self`.
    pub fn overridden_by(self, other: ExperimentConfig) -> Self {
        Self {
            polyhedron: other.polyhedron.or(self.polyhedron),
            qubits: other.qubits.or(self.qubits),
            state: other.state.or(self.state),
            f: other.f.or(self.f),
            state_seed: other.state_seed.or(self.state_seed),
            rank: other.rank.or(self.rank),
            sample_size: other.sample_size.or(self.sample_size),
            runs: other.runs.or(self.runs),
            seed: other.seed.or(self.seed),
            alpha: other.alpha.or(self.alpha),
            out_csv: other.out_csv.or(self.out_csv),
            out_json: other.out_json.or(self.out_json),
        }
    }

    pub fn kind(&self) -> Result<PolyhedronKind> {
        let name = self.polyhedron.as_deref().ok_or_else(|| UsageError("polyhedron not set".into()))?;
        name.parse().map_err(|e: qtomo_core::Error| UsageError(e.to_string()).into())
    }

    pub fn qubits(&self) -> Result<usize> {
        match self.qubits {
            Some(l) if l >= 1 => Ok(l),
            Some(l) => bail!(UsageError(format!("qubits must be at least 1, got {l}"))),
            None => Ok(1),
        }
    }

    pub fn protocol(&self) -> Result<InstrumentalMatrix> {
        Ok(protocol::polyhedron_protocol(self.kind()?, self.qubits()?)?)
    }

    pub fn sample_size(&self) -> Result<f64> {
        match self.sample_size {
            Some(n) if n >= 1.0 && n.is_finite() => Ok(n),
            Some(n) => bail!(UsageError(format!("sample_size must be at least 1, got {n}"))),
            None => bail!(UsageError("sample_size not set".into())),
        }
    }

    pub fn runs(&self) -> Result<usize> {
        match self.runs.unwrap_or(1) {
            0 => bail!(UsageError("runs must be at least 1".into())),
            r => Ok(r),
        }
    }

    pub fn true_state(&self) -> Result<DensityMatrix> {
        let l = self.qubits()?;
        let s = 1usize << l;
        let kind = self.state.as_deref().unwrap_or("pure-random");
        let rho = match kind {
            "pure-random" => states::random_pure(s, self.state_seed.unwrap_or(0)).density(),
            "ghz" => states::ghz(l).map_err(|e| UsageError(e.to_string()))?.density(),
            "bell" => {
                if l != 2 {
                    bail!(UsageError(format!("bell state needs 2 qubits, got {l}")));
                }
                states::ghz(2)?.density()
            }
            "white-noise-mix" => {
                let f = self.f.ok_or_else(|| UsageError("white-noise-mix needs f".into()))?;
                if !(0.0..=1.0).contains(&f) {
                    bail!(UsageError(format!("f must lie in [0, 1], got {f}")));
                }
                let ghz = states::ghz(l).map_err(|e| UsageError(e.to_string()))?;
                states::white_noise_mix(f, &ghz)?
            }
            other => bail!(UsageError(format!("unknown state kind '{other}'"))),
        };
        Ok(rho)
    }

    /// Requested rank, defaulting to the rank of the true state.
    pub fn rank(&self, rho: &DensityMatrix) -> Result<usize> {
        let r = self.rank.unwrap_or_else(|| states::infer_rank(rho));
        if r == 0 || r > rho.dim() {
            bail!(UsageError(format!("rank {r} outside 1..={}", rho.dim())));
        }
        Ok(r)
    }
}
