//! Versioned JSON model files.
//!
//! Hyper-parameters are stored in log space, `τ` as one row per individual
//! and every `Ĉ_k` as its packed lower triangle (row by row).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::vem::{
    ClusterMeanPosterior, HyperParams, HypothesisRegime, MeanProcessPosterior, ModelConfig, PriorMeans,
    Responsibilities, TraceEntry, TrainingState,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ClusterRecord {
    prior_mean: Vec<f64>,
    mean: Vec<f64>,
    cov_lower: Vec<f64>,
    log_det: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    regime: HypothesisRegime,
    k: usize,
    grid: Vec<f64>,
    hp: HyperParams,
    tau: Vec<Vec<f64>>,
    clusters: Vec<ClusterRecord>,
    elbo: f64,
    iterations: usize,
    converged: bool,
    #[serde(default)]
    warnings: Vec<String>,
    #[serde(default)]
    trace: Vec<TraceEntry>,
    #[serde(default)]
    prior_means: PriorMeans,
    #[serde(default)]
    config: ModelConfig,
    data: Dataset,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub(crate) fn pack_lower(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub(crate) fn unpack_lower(v: &[f64], n: usize) -> Result<DMatrix<f64>> {
    if v.len() != n * (n + 1) / 2 {
        return Err(Error::LengthMismatch { expected: n * (n + 1) / 2, found: v.len() });
    }
    let mut m = DMatrix::zeros(n, n);
    let mut it = v.iter();
    for i in 0..n {
        for j in 0..=i {
            let x = *it.next().expect("length checked");
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    Ok(m)
}

impl From<&TrainingState> for ModelFile {
    fn from(s: &TrainingState) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            regime: s.regime,
            k: s.k(),
            grid: s.posterior.grid.clone(),
            hp: s.hp.clone(),
            tau: (0..s.tau.m()).map(|i| s.tau.row(i)).collect(),
            clusters: s
                .posterior
                .clusters
                .iter()
                .map(|c| ClusterRecord {
                    prior_mean: c.prior_mean.as_slice().to_vec(),
                    mean: c.mean.as_slice().to_vec(),
                    cov_lower: pack_lower(&c.cov),
                    log_det: c.log_det,
                })
                .collect(),
            elbo: s.elbo,
            iterations: s.iterations,
            converged: s.converged,
            warnings: s.warnings.clone(),
            trace: s.trace.clone(),
            prior_means: s.prior_means.clone(),
            config: s.config.clone(),
            data: s.data.clone(),
        }
    }
}

impl ModelFile {
    fn into_state(self) -> Result<TrainingState> {
        let n = self.grid.len();
        if self.clusters.len() != self.k || self.hp.k() != self.k {
            return Err(Error::invalid(format!(
                "model file declares K = {} but stores {} clusters and {} weights",
                self.k,
                self.clusters.len(),
                self.hp.k()
            )));
        }
        let m = self.data.m();
        self.hp.validate(self.regime, m, self.k)?;
        let tau = Responsibilities::from_rows(&self.tau)?;
        tau.validate()?;
        if tau.m() != m || tau.k() != self.k {
            return Err(Error::invalid(format!("τ is {}×{}, expected {m}×{}", tau.m(), tau.k(), self.k)));
        }
        let clusters = self
            .clusters
            .into_iter()
            .map(|c| {
                if c.mean.len() != n || c.prior_mean.len() != n {
                    return Err(Error::LengthMismatch { expected: n, found: c.mean.len().min(c.prior_mean.len()) });
                }
                Ok(ClusterMeanPosterior {
                    prior_mean: DVector::from_vec(c.prior_mean),
                    mean: DVector::from_vec(c.mean),
                    cov: unpack_lower(&c.cov_lower, n)?,
                    log_det: c.log_det,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingState {
            regime: self.regime,
            data: self.data,
            hp: self.hp,
            tau,
            posterior: MeanProcessPosterior { grid: self.grid, clusters },
            prior_means: self.prior_means,
            config: self.config,
            elbo: self.elbo,
            trace: self.trace,
            iterations: self.iterations,
            converged: self.converged,
            warnings: self.warnings,
        })
    }
}

impl TrainingState {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }

    /// Parses a model file, refusing versions newer than [`FORMAT_VERSION`].
    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.format_version > FORMAT_VERSION || probe.format_version == 0 {
            return Err(Error::UnsupportedFormatVersion { found: probe.format_version, supported: FORMAT_VERSION });
        }
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_state()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
