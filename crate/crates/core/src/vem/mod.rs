//! Variational EM for the multi-task GP mixture.
//!
//! The variational posterior factorises into per-individual multinomials
//! (responsibilities `τ`) and per-cluster Gaussian mean processes
//! `N(m̂_k, Ĉ_k)` on the pooled grid. Training alternates the two E-steps with
//! a hyper-parameter M-step whose structure depends on the
//! [`HypothesisRegime`].

mod elbo;
mod estep;
mod init;
mod mstep;
mod train;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{model_cov, CovMatrix, KernelParams, NoiseParam, DEFAULT_REL_JITTER};
use crate::optim::OptimConfig;

pub use elbo::{elbo, elbo_terms, ElboTerms};
pub use estep::{e_step_mu, e_step_tau, mean_process_posterior, tau_log_weights, ObsBlock};
pub use init::{initial_hyperparams, kmeans_features, kmeans_responsibilities, InitConfig, InitStrategy};
pub use mstep::{
    cluster_objective, individual_objective, m_step, update_pi, BlockKind, BlockReport, MStepReport,
};
pub use train::{train, train_with_config, StopConfig, TraceEntry, TrainStep, TrainingState};

/// Which hyper-parameters are shared across clusters (`γ`) and individuals
/// (`θ`, `σ²`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HypothesisRegime {
    /// One `γ₀`, one `(θ₀, σ₀²)`.
    H00,
    /// Cluster-specific `γ_k`, one `(θ₀, σ₀²)`.
    Hk0,
    /// One `γ₀`, individual-specific `(θ_i, σ_i²)`.
    H0i,
    /// Cluster- and individual-specific.
    Hki,
}

impl HypothesisRegime {
    pub const ALL: [HypothesisRegime; 4] =
        [HypothesisRegime::H00, HypothesisRegime::Hk0, HypothesisRegime::H0i, HypothesisRegime::Hki];

    pub fn shared_gamma(self) -> bool {
        matches!(self, HypothesisRegime::H00 | HypothesisRegime::H0i)
    }

    pub fn shared_theta(self) -> bool {
        matches!(self, HypothesisRegime::H00 | HypothesisRegime::Hk0)
    }

    pub fn n_gamma_sets(self, k: usize) -> usize {
        if self.shared_gamma() {
            1
        } else {
            k
        }
    }

    pub fn n_theta_sets(self, m: usize) -> usize {
        if self.shared_theta() {
            1
        } else {
            m
        }
    }

    /// Number of kernel hyper-parameter sets to learn (`θ`/`σ²` together count
    /// as one set).
    pub fn n_sets(self, m: usize, k: usize) -> usize {
        self.n_gamma_sets(k) + self.n_theta_sets(m)
    }
}

impl fmt::Display for HypothesisRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HypothesisRegime::H00 => "H00",
            HypothesisRegime::Hk0 => "Hk0",
            HypothesisRegime::H0i => "H0i",
            HypothesisRegime::Hki => "Hki",
        };
        f.write_str(s)
    }
}

impl FromStr for HypothesisRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h00" => Ok(HypothesisRegime::H00),
            "hk0" => Ok(HypothesisRegime::Hk0),
            "h0i" => Ok(HypothesisRegime::H0i),
            "hki" => Ok(HypothesisRegime::Hki),
            _ => Err(Error::invalid(format!("unknown regime `{s}` (expected H00, Hk0, H0i or Hki)"))),
        }
    }
}

/// All hyper-parameters `Θ = {γ, θ, σ², π}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// One entry when shared across clusters, `K` otherwise.
    pub gamma: Vec<KernelParams>,
    /// One entry when shared across individuals, `M` otherwise.
    pub theta: Vec<KernelParams>,
    /// Same multiplicity as `theta`.
    pub noise: Vec<NoiseParam>,
    pub pi: Vec<f64>,
}

impl HyperParams {
    /// Hyper-parameters with the multiplicities of `regime`, every set
    /// initialised to the same values and uniform mixing weights.
    pub fn uniform(
        regime: HypothesisRegime,
        m: usize,
        k: usize,
        gamma: KernelParams,
        theta: KernelParams,
        noise: NoiseParam,
    ) -> Self {
        HyperParams {
            gamma: vec![gamma; regime.n_gamma_sets(k)],
            theta: vec![theta; regime.n_theta_sets(m)],
            noise: vec![noise; regime.n_theta_sets(m)],
            pi: vec![1.0 / k as f64; k],
        }
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn gamma_for(&self, k: usize) -> &KernelParams {
        if self.gamma.len() == 1 {
            &self.gamma[0]
        } else {
            &self.gamma[k]
        }
    }

    pub fn theta_for(&self, i: usize) -> &KernelParams {
        if self.theta.len() == 1 {
            &self.theta[0]
        } else {
            &self.theta[i]
        }
    }

    pub fn noise_for(&self, i: usize) -> &NoiseParam {
        if self.noise.len() == 1 {
            &self.noise[0]
        } else {
            &self.noise[i]
        }
    }

    pub fn validate(&self, regime: HypothesisRegime, m: usize, k: usize) -> Result<()> {
        let expect = |what: &str, found: usize, expected: usize| {
            if found == expected {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{what}: regime {regime} needs {expected} set(s), found {found}"
                )))
            }
        };
        expect("gamma", self.gamma.len(), regime.n_gamma_sets(k))?;
        expect("theta", self.theta.len(), regime.n_theta_sets(m))?;
        expect("noise", self.noise.len(), regime.n_theta_sets(m))?;
        if self.pi.len() != k {
            return Err(Error::LengthMismatch { expected: k, found: self.pi.len() });
        }
        if self.pi.iter().any(|p| !(*p >= 0.0)) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("mixing proportions must lie on the simplex"));
        }
        Ok(())
    }
}

/// Variational membership probabilities, one row per individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    pub tau: DMatrix<f64>,
}

impl Responsibilities {
    pub fn new(tau: DMatrix<f64>) -> Result<Self> {
        let r = Responsibilities { tau };
        r.validate()?;
        Ok(r)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("responsibility rows of unequal length"));
        }
        Self::new(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.tau.row_iter().enumerate() {
            if row.iter().any(|v| !(*v >= 0.0)) || (row.sum() - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!("responsibility row {i} is not on the simplex")));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.tau.nrows()
    }

    pub fn k(&self) -> usize {
        self.tau.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.tau.row(i).iter().copied().collect()
    }

    /// Most probable cluster of each individual (lowest index on ties).
    pub fn argmax(&self) -> Vec<usize> {
        self.tau
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (k, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Prior mean function of a mean process.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorMean {
    #[default]
    Zero,
    Constant { value: f64 },
    /// Linear interpolation through `(t, values)`, constant beyond the ends.
    Tabulated { t: Vec<f64>, values: Vec<f64> },
}

impl PriorMean {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Constant { value } => *value,
            PriorMean::Tabulated { t, values } => interpolate(t, values, x),
        }
    }

    pub fn on_grid(&self, grid: &[f64]) -> DVector<f64> {
        DVector::from_iterator(grid.len(), grid.iter().map(|&x| self.eval(x)))
    }

    pub fn validate(&self) -> Result<()> {
        if let PriorMean::Tabulated { t, values } = self {
            if t.is_empty() || t.len() != values.len() || t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid("tabulated prior mean needs strictly increasing t and matching values"));
            }
        }
        Ok(())
    }
}

pub(crate) fn interpolate(t: &[f64], v: &[f64], x: f64) -> f64 {
    if x <= t[0] {
        return v[0];
    }
    if x >= t[t.len() - 1] {
        return v[v.len() - 1];
    }
    let j = t.partition_point(|&s| s <= x);
    let (t0, t1) = (t[j - 1], t[j]);
    let w = (x - t0) / (t1 - t0);
    v[j - 1] * (1.0 - w) + v[j] * w
}

/// Prior means of all clusters: a single entry applies to every cluster.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorMeans(pub Vec<PriorMean>);

impl PriorMeans {
    pub fn zero() -> Self {
        PriorMeans(vec![PriorMean::Zero])
    }

    pub fn get(&self, k: usize) -> &PriorMean {
        match self.0.len() {
            0 => &PriorMean::Zero,
            1 => &self.0[0],
            _ => &self.0[k],
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.0.len() > 1 && self.0.len() != k {
            return Err(Error::invalid(format!("expected 1 or {k} prior means, found {}", self.0.len())));
        }
        self.0.iter().try_for_each(PriorMean::validate)
    }
}

/// Hyper-posterior of one cluster's mean process on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterMeanPosterior {
    pub prior_mean: DVector<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `log |Ĉ_k|`, computed from the well-conditioned factorization used to
    /// build `cov`.
    pub log_det: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanProcessPosterior {
    pub grid: Vec<f64>,
    pub clusters: Vec<ClusterMeanPosterior>,
}

impl MeanProcessPosterior {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }
}

/// Box constraints (log space) used by every hyper-parameter optimization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub log_v: (f64, f64),
    pub log_l: (f64, f64),
    pub log_sigma2: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds { log_v: (-6.0, 8.0), log_l: (-6.0, 6.0), log_sigma2: (-14.0, 8.0) }
    }
}

impl ParamBounds {
    pub fn kernel(&self) -> Vec<(f64, f64)> {
        vec![self.log_v, self.log_l]
    }

    pub fn kernel_noise(&self) -> Vec<(f64, f64)> {
        vec![self.log_v, self.log_l, self.log_sigma2]
    }

    pub fn clamp_kernel(&self, p: &KernelParams) -> KernelParams {
        KernelParams::from_log(p.log_v.clamp(self.log_v.0, self.log_v.1), p.log_l.clamp(self.log_l.0, self.log_l.1))
    }

    pub fn clamp_noise(&self, s: &NoiseParam) -> NoiseParam {
        NoiseParam::from_log(s.log_sigma2.clamp(self.log_sigma2.0, self.log_sigma2.1))
    }
}

/// Optimizer settings for hyper-parameter blocks: objectives on large grids
/// carry rounding noise around 1e-9 relative, so a tighter `f_tol` only buys
/// failed line searches.
fn default_vem_optim() -> OptimConfig {
    OptimConfig { f_tol: 1e-9, ..OptimConfig::default() }
}

/// Numerical settings shared by training and prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Diagonal jitter relative to the kernel variance `v²`.
    pub rel_jitter: f64,
    pub bounds: ParamBounds,
    #[serde(skip, default = "default_vem_optim")]
    pub optim: OptimConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { rel_jitter: DEFAULT_REL_JITTER, bounds: ParamBounds::default(), optim: default_vem_optim() }
    }
}

/// Per-individual quantities that depend only on `(θ_i, σ_i²)`.
#[derive(Clone, Debug)]
pub(crate) struct IndividualTerms {
    pub psi: CovMatrix,
    pub psi_inv: DMatrix<f64>,
    pub psi_inv_y: DVector<f64>,
    pub y: DVector<f64>,
}

pub(crate) fn individual_terms(data: &Dataset, hp: &HyperParams, cfg: &ModelConfig) -> Result<Vec<IndividualTerms>> {
    (0..data.m())
        .into_par_iter()
        .map(|i| {
            let ind = &data.individuals[i];
            let psi = model_cov(&ind.t, hp.theta_for(i), Some(hp.noise_for(i)), cfg.rel_jitter)?;
            let y = ind.y_vec();
            let psi_inv = psi.chol().inverse();
            let psi_inv_y = psi.chol().solve(&y);
            Ok(IndividualTerms { psi, psi_inv, psi_inv_y, y })
        })
        .collect()
}

pub(crate) fn check_dims(data: &Dataset, hp: &HyperParams, tau: &Responsibilities) -> Result<()> {
    if tau.m() != data.m() {
        return Err(Error::LengthMismatch { expected: data.m(), found: tau.m() });
    }
    if tau.k() != hp.k() {
        return Err(Error::LengthMismatch { expected: hp.k(), found: tau.k() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_multiplicities_follow_the_table() {
        let (m, k) = (7, 3);
        assert_eq!(HypothesisRegime::H00.n_sets(m, k), 2);
        assert_eq!(HypothesisRegime::H0i.n_sets(m, k), m + 1);
        assert_eq!(HypothesisRegime::Hk0.n_sets(m, k), k + 1);
        assert_eq!(HypothesisRegime::Hki.n_sets(m, k), m + k);
    }

    #[test]
    fn regime_parsing() {
        for r in HypothesisRegime::ALL {
            assert_eq!(r.to_string().parse::<HypothesisRegime>().unwrap(), r);
        }
        assert!("H11".parse::<HypothesisRegime>().is_err());
    }

    #[test]
    fn prior_mean_interpolation() {
        let p = PriorMean::Tabulated { t: vec![0.0, 1.0, 3.0], values: vec![0.0, 2.0, 6.0] };
        assert_eq!(p.eval(-1.0), 0.0);
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(2.0), 4.0);
        assert_eq!(p.eval(10.0), 6.0);
        assert_eq!(PriorMean::Constant { value: 3.5 }.eval(1.0), 3.5);
    }

    #[test]
    fn responsibilities_validation() {
        assert!(Responsibilities::from_rows(&[vec![0.2, 0.8], vec![1.0, 0.0]]).is_ok());
        assert!(Responsibilities::from_rows(&[vec![0.2, 0.7]]).is_err());
        let r = Responsibilities::from_rows(&[vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap();
        assert_eq!(r.argmax(), vec![1, 0]);
    }
}
