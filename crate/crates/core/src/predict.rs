//! Prediction for a new, partially observed individual.
//!
//! Steps: recompute the mean-process hyper-posteriors on a working grid,
//! form the per-cluster multi-task priors `N(m̂_k, Ĉ_k + Ψ_*)`, estimate the
//! new individual's hyper-parameters and membership probabilities `τ_*`,
//! condition every cluster on the observations, and mix.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::locate;
use crate::error::{Error, Result};
use crate::kernel::{cov_gradients, model_cov, KernelParams, NoiseParam};
use crate::linalg::{
    factor_with_jitter, gaussian_logpdf, normalize_log_weights, sub_matrix, sub_matrix_rect, sub_vector, symmetrize,
    CholFactor,
};
use crate::optim::maximize;
use crate::vem::{mean_process_posterior, ModelConfig, MeanProcessPosterior, ObsBlock, TrainingState};

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sorted union of prediction targets, observed timestamps and optionally the
/// training grid, with the position of every target and observation in it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkingGrid {
    pub t: Vec<f64>,
    pub t_pred: Vec<f64>,
    pub t_obs: Vec<f64>,
    pub pred_idx: Vec<usize>,
    pub obs_idx: Vec<usize>,
}

/// Sorted union of `parts`, merging points closer than `tol` into the smallest.
fn merged_union(parts: &[&[f64]], tol: f64) -> Result<Vec<f64>> {
    let mut all: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    if all.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("timestamps must be finite"));
    }
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        match out.last() {
            Some(&r) if (t - r).abs() <= tol => {}
            _ => out.push(t),
        }
    }
    Ok(out)
}

fn positions(ts: &[f64], grid: &[f64], tol: f64) -> Result<Vec<usize>> {
    ts.iter()
        .map(|&t| locate(grid, t, tol).ok_or(Error::UnresolvedTimestamp { id: "working grid".into(), t }))
        .collect()
}

impl WorkingGrid {
    pub fn new(t_pred: &[f64], t_obs: &[f64], training: Option<&[f64]>, tol: f64) -> Result<Self> {
        if t_pred.is_empty() {
            return Err(Error::invalid("at least one prediction timestamp is required"));
        }
        let mut sorted_obs = t_obs.to_vec();
        sorted_obs.sort_by(f64::total_cmp);
        if sorted_obs.windows(2).any(|w| (w[1] - w[0]).abs() <= tol) {
            return Err(Error::invalid("observed timestamps of the new individual must be distinct"));
        }
        let t = merged_union(&[t_pred, t_obs, training.unwrap_or(&[])], tol)?;
        let pred_idx = positions(t_pred, &t, tol)?;
        let obs_idx = positions(t_obs, &t, tol)?;
        Ok(WorkingGrid { t, t_pred: t_pred.to_vec(), t_obs: t_obs.to_vec(), pred_idx, obs_idx })
    }
}

/// Mean-process hyper-posteriors on `grid`, reusing the converged `τ` and `Θ`.
///
/// Computed on the union of `grid` and the training grid, then restricted;
/// the stored posterior is returned unchanged when `grid` is the training
/// grid.
pub fn hyperposterior_on_grid(state: &TrainingState, grid: &[f64]) -> Result<MeanProcessPosterior> {
    if grid == state.posterior.grid.as_slice() {
        return Ok(state.posterior.clone());
    }
    let tol = state.data.tol;
    let full = merged_union(&[grid, &state.data.grid.t], tol)?;
    let full_post = if full == state.posterior.grid {
        state.posterior.clone()
    } else {
        let data = &state.data;
        let cfg = &state.config;
        let terms = data
            .individuals
            .par_iter()
            .enumerate()
            .map(|(i, ind)| {
                let psi = model_cov(&ind.t, state.hp.theta_for(i), Some(state.hp.noise_for(i)), cfg.rel_jitter)?;
                let idx = positions(&ind.t, &full, tol)?;
                let y = ind.y_vec();
                Ok((idx, psi.chol().inverse(), psi.chol().solve(&y)))
            })
            .collect::<Result<Vec<_>>>()?;
        let blocks: Vec<ObsBlock<'_>> =
            terms.iter().map(|(idx, pi, piy)| ObsBlock { idx, psi_inv: pi, psi_inv_y: piy }).collect();
        mean_process_posterior(&full, &blocks, &state.tau.tau, &state.hp, &state.prior_means, cfg)?
    };
    if full.len() == grid.len() {
        return Ok(full_post);
    }
    let idx = positions(grid, &full, tol)?;
    let clusters = full_post
        .clusters
        .iter()
        .map(|c| {
            let cov = sub_matrix(&c.cov, &idx);
            // log-determinant of the marginal block, from its own factor
            let log_det = CholFactor::new(cov.clone()).map_or(f64::NAN, |f| f.log_det());
            crate::vem::ClusterMeanPosterior {
                prior_mean: sub_vector(&c.prior_mean, &idx),
                mean: sub_vector(&c.mean, &idx),
                cov,
                log_det,
            }
        })
        .collect();
    Ok(MeanProcessPosterior { grid: grid.to_vec(), clusters })
}

/// A Gaussian over the points of some grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBlock {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Per-cluster prior of the new individual's outputs on the working grid:
/// `N(m̂_k, Ĉ_k + Ψ_*)`.
pub fn multitask_prior(
    mp: &MeanProcessPosterior,
    theta: &KernelParams,
    noise: &NoiseParam,
    cfg: &ModelConfig,
) -> Result<Vec<GaussianBlock>> {
    let psi = model_cov(&mp.grid, theta, Some(noise), cfg.rel_jitter)?;
    Ok(mp
        .clusters
        .iter()
        .map(|c| {
            let mut cov = &c.cov + &psi.values;
            symmetrize(&mut cov);
            GaussianBlock { mean: c.mean.clone(), cov }
        })
        .collect())
}

/// Mean and covariance of each cluster's hyper-posterior at the observed
/// points, which is all the membership and hyper-parameter updates need.
#[derive(Clone, Debug)]
pub struct ObservedBlocks {
    pub t_obs: Vec<f64>,
    pub y_obs: DVector<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl ObservedBlocks {
    pub fn new(mp: &MeanProcessPosterior, obs_idx: &[usize], t_obs: &[f64], y_obs: &[f64]) -> Self {
        ObservedBlocks {
            t_obs: t_obs.to_vec(),
            y_obs: DVector::from_column_slice(y_obs),
            means: mp.clusters.iter().map(|c| sub_vector(&c.mean, obs_idx)).collect(),
            covs: mp.clusters.iter().map(|c| sub_matrix(&c.cov, obs_idx)).collect(),
        }
    }

    fn factor(&self, k: usize, psi: &DMatrix<f64>) -> Result<CholFactor> {
        let mut s = &self.covs[k] + psi;
        symmetrize(&mut s);
        factor_with_jitter(&s, 0.0, "prediction marginal covariance").map(|r| r.0)
    }

    /// `log N(y_*; m̂_k(t_*), Ĉ_k^{t_*} + Ψ_*)` for every cluster.
    pub fn log_marginals(&self, theta: &KernelParams, noise: &NoiseParam, cfg: &ModelConfig) -> Result<Vec<f64>> {
        let psi = model_cov(&self.t_obs, theta, Some(noise), cfg.rel_jitter)?;
        (0..self.means.len())
            .map(|k| gaussian_logpdf(&self.y_obs, &self.means[k], &self.factor(k, &psi.values)?))
            .collect()
    }
}

/// Membership probabilities of the new individual at fixed hyper-parameters.
pub fn tau_star(obs: &ObservedBlocks, pi: &[f64], theta: &KernelParams, noise: &NoiseParam, cfg: &ModelConfig) -> Result<Vec<f64>> {
    if obs.t_obs.is_empty() {
        return Ok(pi.to_vec());
    }
    let ll = obs.log_marginals(theta, noise, cfg)?;
    let logw: Vec<f64> = ll.iter().zip(pi).map(|(l, p)| p.ln() + l).collect();
    if logw.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::NonFiniteObjective);
    }
    Ok(normalize_log_weights(&logw))
}

/// `Σ_k τ_k log N(y_*; m̂_k(t_*), Ĉ_k^{t_*} + Ψ_*)` and its gradient with
/// respect to `[log v, log ℓ, log σ²]` of the new individual.
pub fn prediction_objective(
    obs: &ObservedBlocks,
    tau: &[f64],
    theta: &KernelParams,
    noise: &NoiseParam,
    cfg: &ModelConfig,
) -> Result<(f64, Vec<f64>)> {
    let psi = model_cov(&obs.t_obs, theta, Some(noise), cfg.rel_jitter)?;
    let grads = cov_gradients(&obs.t_obs, theta, Some(noise), psi.jitter);
    let mut value = 0.0;
    let mut grad = vec![0.0; grads.len()];
    for (k, &w) in tau.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let f = obs.factor(k, &psi.values)?;
        let r = &obs.y_obs - &obs.means[k];
        value += w * gaussian_logpdf(&obs.y_obs, &obs.means[k], &f)?;
        let alpha = f.solve(&r);
        let a = &alpha * alpha.transpose() - f.inverse();
        for (gj, dm) in grad.iter_mut().zip(&grads) {
            *gj += w * 0.5 * a.component_mul(dm).sum();
        }
    }
    Ok((value, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictMethod {
    /// Follow the regime: shared individual hyper-parameters use the
    /// shortcut, individual-specific ones the prediction EM.
    Auto,
    Em,
    /// Shared hyper-parameters, `τ_*` evaluated once.
    Shortcut3bis,
    /// `τ_* = π̂`.
    Shortcut3ter,
}

impl std::str::FromStr for PredictMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(PredictMethod::Auto),
            "em" => Ok(PredictMethod::Em),
            "3bis" | "shortcut3bis" => Ok(PredictMethod::Shortcut3bis),
            "3ter" | "shortcut3ter" => Ok(PredictMethod::Shortcut3ter),
            _ => Err(Error::invalid(format!("unknown prediction method `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    pub method: PredictMethod,
    /// Add the training grid to the working grid.
    pub include_training_grid: bool,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig { method: PredictMethod::Auto, include_training_grid: true, max_iter: 20, tol: 1e-3 }
    }
}

/// The new individual's fitted quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewIndividual {
    pub t_obs: Vec<f64>,
    pub y_obs: Vec<f64>,
    pub theta: KernelParams,
    pub noise: NoiseParam,
    pub tau: Vec<f64>,
    /// Method actually used after dispatch.
    pub method: PredictMethod,
    pub iterations: usize,
    /// Weighted objective after each prediction-EM iteration.
    pub trace: Vec<f64>,
}

/// Starting hyper-parameters for the new individual: the shared set, or the
/// geometric mean of the individual-specific ones.
pub fn default_theta_star(state: &TrainingState) -> (KernelParams, NoiseParam) {
    let hp = &state.hp;
    let n = hp.theta.len() as f64;
    let lv = hp.theta.iter().map(|p| p.log_v).sum::<f64>() / n;
    let ll = hp.theta.iter().map(|p| p.log_l).sum::<f64>() / n;
    let ls = hp.noise.iter().map(|p| p.log_sigma2).sum::<f64>() / n;
    (KernelParams::from_log(lv, ll), NoiseParam::from_log(ls))
}

fn fit_theta(
    obs: &ObservedBlocks,
    tau: &[f64],
    theta: KernelParams,
    noise: NoiseParam,
    cfg: &ModelConfig,
) -> (KernelParams, NoiseParam, f64) {
    let x0 = [theta.log_v, theta.log_l, noise.log_sigma2];
    let f = |x: &[f64]| {
        prediction_objective(obs, tau, &KernelParams::from_log(x[0], x[1]), &NoiseParam::from_log(x[2]), cfg)
            .unwrap_or((f64::NAN, vec![0.0; 3]))
    };
    let start = f(&x0).0;
    match maximize(f, &x0, Some(&cfg.bounds.kernel_noise()), &cfg.optim) {
        Ok(r) if !(start > r.value) => (KernelParams::from_log(r.x[0], r.x[1]), NoiseParam::from_log(r.x[2]), r.value),
        Ok(_) => (theta, noise, start),
        Err(e) => {
            log::warn!("prediction M-step failed ({e}); keeping the previous hyper-parameters");
            (theta, noise, start)
        }
    }
}

/// Alternates hyper-parameter maximization and the `τ_*` update. Under
/// regimes with shared individual hyper-parameters the maximization is
/// skipped and the result coincides with the 3bis shortcut.
pub fn predict_em(state: &TrainingState, obs: &ObservedBlocks, pcfg: &PredictConfig) -> Result<NewIndividual> {
    if obs.t_obs.is_empty() {
        return Err(Error::invalid("prediction EM needs at least one observation"));
    }
    let cfg = &state.config;
    let pi = &state.hp.pi;
    let (mut theta, mut noise) = default_theta_star(state);
    let fit = !state.regime.shared_theta();
    let mut tau = pi.clone();
    let mut trace = Vec::new();
    let mut iterations = 0;
    if fit {
        for it in 1..=pcfg.max_iter.max(1) {
            iterations = it;
            let (t, s, value) = fit_theta(obs, &tau, theta, noise, cfg);
            theta = t;
            noise = s;
            tau = tau_star(obs, pi, &theta, &noise, cfg)?;
            trace.push(value);
            log::info!("prediction EM iteration {it}: weighted objective {value:.6}");
            if let [.., prev, last] = trace.as_slice() {
                if ((last - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < pcfg.tol {
                    break;
                }
            }
        }
    }
    // final τ_* from the formula at the final hyper-parameters
    tau = tau_star(obs, pi, &theta, &noise, cfg)?;
    Ok(NewIndividual {
        t_obs: obs.t_obs.clone(),
        y_obs: obs.y_obs.iter().copied().collect(),
        theta,
        noise,
        tau,
        method: PredictMethod::Em,
        iterations,
        trace,
    })
}

/// Shared individual hyper-parameters and a single `τ_*` evaluation.
pub fn predict_shortcut_3bis(state: &TrainingState, obs: &ObservedBlocks) -> Result<NewIndividual> {
    if !state.regime.shared_theta() {
        return Err(Error::invalid(format!(
            "the 3bis shortcut needs shared individual hyper-parameters, model regime is {}",
            state.regime
        )));
    }
    let (theta, noise) = (state.hp.theta[0], state.hp.noise[0]);
    let tau = tau_star(obs, &state.hp.pi, &theta, &noise, &state.config)?;
    Ok(NewIndividual {
        t_obs: obs.t_obs.clone(),
        y_obs: obs.y_obs.iter().copied().collect(),
        theta,
        noise,
        tau,
        method: PredictMethod::Shortcut3bis,
        iterations: 0,
        trace: Vec::new(),
    })
}

/// `τ_* = π̂`; individual-specific hyper-parameters are fitted once with
/// `τ_*` held at `π̂`.
pub fn predict_shortcut_3ter(state: &TrainingState, obs: &ObservedBlocks) -> Result<NewIndividual> {
    let pi = state.hp.pi.clone();
    let (mut theta, mut noise) = default_theta_star(state);
    if !state.regime.shared_theta() && !obs.t_obs.is_empty() {
        let (t, s, _) = fit_theta(obs, &pi, theta, noise, &state.config);
        theta = t;
        noise = s;
    }
    Ok(NewIndividual {
        t_obs: obs.t_obs.clone(),
        y_obs: obs.y_obs.iter().copied().collect(),
        theta,
        noise,
        tau: pi,
        method: PredictMethod::Shortcut3ter,
        iterations: 0,
        trace: Vec::new(),
    })
}

/// One cluster's predictive distribution at the target timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPrediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl ClusterPrediction {
    pub fn sd(&self) -> Vec<f64> {
        self.cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    /// Pointwise central 95% interval `μ ± 1.96 σ`.
    pub fn interval95(&self) -> Vec<(f64, f64)> {
        self.mean.iter().zip(self.sd()).map(|(m, s)| (m - Z95 * s, m + Z95 * s)).collect()
    }
}

/// Gaussian conditioning of each cluster's prior block on the observations.
pub fn cluster_posteriors(
    priors: &[GaussianBlock],
    pred_idx: &[usize],
    obs_idx: &[usize],
    y_obs: &[f64],
) -> Result<Vec<ClusterPrediction>> {
    if obs_idx.len() != y_obs.len() {
        return Err(Error::LengthMismatch { expected: obs_idx.len(), found: y_obs.len() });
    }
    let y = DVector::from_column_slice(y_obs);
    priors
        .par_iter()
        .map(|p| {
            let mean_p = sub_vector(&p.mean, pred_idx);
            let cov_pp = sub_matrix(&p.cov, pred_idx);
            if obs_idx.is_empty() {
                return Ok(ClusterPrediction { mean: mean_p, cov: cov_pp });
            }
            let cov_oo = sub_matrix(&p.cov, obs_idx);
            let cov_op = sub_matrix_rect(&p.cov, obs_idx, pred_idx);
            let f = factor_with_jitter(&cov_oo, 0.0, "observed block of the multi-task prior")?.0;
            let r = &y - sub_vector(&p.mean, obs_idx);
            let mean = mean_p + cov_op.transpose() * f.solve(&r);
            let w = f.solve_lower_mat(&cov_op);
            let mut cov = cov_pp - w.transpose() * w;
            symmetrize(&mut cov);
            Ok(ClusterPrediction { mean, cov })
        })
        .collect()
}

/// `Σ_k τ_*k N(μ̂_*k, Γ̂_*k)` at the target timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixturePrediction {
    pub t: Vec<f64>,
    pub weights: Vec<f64>,
    pub clusters: Vec<ClusterPrediction>,
}

fn normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return if y == mean { f64::INFINITY } else { 0.0 };
    }
    let z = (y - mean) * (y - mean) / var;
    (-0.5 * z).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

impl MixturePrediction {
    pub fn new(t: Vec<f64>, weights: Vec<f64>, clusters: Vec<ClusterPrediction>) -> Result<Self> {
        if weights.len() != clusters.len() {
            return Err(Error::LengthMismatch { expected: clusters.len(), found: weights.len() });
        }
        Ok(MixturePrediction { t, weights, clusters })
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.t.len())
            .map(|j| self.weights.iter().zip(&self.clusters).map(|(w, c)| w * c.mean[j]).sum())
            .collect()
    }

    /// Marginal mixture density of the output at target `j`.
    pub fn density(&self, j: usize, y: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.clusters)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, c)| w * normal_pdf(y, c.mean[j], c.cov[(j, j)]))
            .sum()
    }

    /// Index of the most probable cluster (lowest index on ties).
    pub fn most_probable(&self) -> usize {
        let mut best = 0;
        for (k, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = k;
            }
        }
        best
    }

    /// The Gaussian of the most probable cluster alone.
    pub fn collapsed(&self) -> (usize, &ClusterPrediction) {
        let k = self.most_probable();
        (k, &self.clusters[k])
    }

    /// Density matrix indexed `[y][t]`.
    pub fn heatmap(&self, y_grid: &[f64]) -> Vec<Vec<f64>> {
        y_grid.iter().map(|&y| (0..self.t.len()).map(|j| self.density(j, y)).collect()).collect()
    }
}

/// Heatmap of the mixture density on `t_grid × y_grid`; `t_grid` must be the
/// prediction's target timestamps or a subset of them.
pub fn density_heatmap(pred: &MixturePrediction, t_grid: &[f64], y_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if t_grid.is_empty() || y_grid.is_empty() {
        return Err(Error::invalid("heatmap grids must be nonempty"));
    }
    let cols: Vec<usize> = t_grid
        .iter()
        .map(|&t| {
            pred.t
                .iter()
                .position(|&s| (s - t).abs() <= 1e-9)
                .ok_or(Error::UnresolvedTimestamp { id: "heatmap".into(), t })
        })
        .collect::<Result<_>>()?;
    Ok(y_grid.iter().map(|&y| cols.iter().map(|&j| pred.density(j, y)).collect()).collect())
}

/// Full output of [`predict`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub grid: WorkingGrid,
    pub new: NewIndividual,
    pub mixture: MixturePrediction,
}

/// Runs the whole pipeline for one new individual.
pub fn predict(state: &TrainingState, t_obs: &[f64], y_obs: &[f64], t_pred: &[f64], pcfg: &PredictConfig) -> Result<Prediction> {
    if t_obs.len() != y_obs.len() {
        return Err(Error::LengthMismatch { expected: t_obs.len(), found: y_obs.len() });
    }
    if y_obs.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("observed outputs must be finite"));
    }
    let training = pcfg.include_training_grid.then_some(state.data.grid.t.as_slice());
    let grid = WorkingGrid::new(t_pred, t_obs, training, state.data.tol)?;
    let mp = hyperposterior_on_grid(state, &grid.t)?;
    let obs = ObservedBlocks::new(&mp, &grid.obs_idx, t_obs, y_obs);

    let method = match pcfg.method {
        PredictMethod::Auto if state.regime.shared_theta() => PredictMethod::Shortcut3bis,
        PredictMethod::Auto => PredictMethod::Em,
        m => m,
    };
    let new = match method {
        _ if t_obs.is_empty() => predict_shortcut_3ter(state, &obs)?,
        PredictMethod::Shortcut3bis => predict_shortcut_3bis(state, &obs)?,
        PredictMethod::Shortcut3ter => predict_shortcut_3ter(state, &obs)?,
        _ => predict_em(state, &obs, pcfg)?,
    };
    log::info!("prediction path: {:?}, τ_* = {:?}", new.method, new.tau);

    let priors = multitask_prior(&mp, &new.theta, &new.noise, &state.config)?;
    let clusters = cluster_posteriors(&priors, &grid.pred_idx, &grid.obs_idx, y_obs)?;
    let mixture = MixturePrediction::new(t_pred.to_vec(), new.tau.clone(), clusters)?;
    Ok(Prediction { grid, new, mixture })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn working_grid_contains_both_sets() {
        let g = WorkingGrid::new(&[5.0, 1.0], &[0.5, 1.0], Some(&[0.0, 2.0]), 1e-9).unwrap();
        assert_eq!(g.t, vec![0.0, 0.5, 1.0, 2.0, 5.0]);
        assert_eq!(g.pred_idx, vec![4, 2]);
        assert_eq!(g.obs_idx, vec![1, 2]);
        assert!(WorkingGrid::new(&[1.0], &[0.5, 0.5], None, 1e-9).is_err());
    }

    #[test]
    fn conditioning_without_observations_is_the_prior() {
        let prior = GaussianBlock {
            mean: DVector::from_vec(vec![1.0, 2.0]),
            cov: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        };
        let post = cluster_posteriors(&[prior.clone()], &[0, 1], &[], &[]).unwrap();
        assert_eq!(post[0].mean, prior.mean);
        assert_eq!(post[0].cov, prior.cov);
    }

    #[test]
    fn one_hot_mixture_density_is_the_cluster_gaussian() {
        let c0 = ClusterPrediction { mean: DVector::from_vec(vec![0.0]), cov: DMatrix::from_element(1, 1, 4.0) };
        let c1 = ClusterPrediction { mean: DVector::from_vec(vec![3.0]), cov: DMatrix::from_element(1, 1, 1.0) };
        let m = MixturePrediction::new(vec![0.0], vec![0.0, 1.0], vec![c0, c1]).unwrap();
        for y in [-1.0, 0.0, 2.5, 3.0, 7.0] {
            assert_relative_eq!(m.density(0, y), normal_pdf(y, 3.0, 1.0), max_relative = 1e-15);
        }
        assert_eq!(m.mean(), vec![3.0]);
        assert_eq!(m.collapsed().0, 1);
    }

    #[test]
    fn interval_is_symmetric() {
        let c = ClusterPrediction { mean: DVector::from_vec(vec![1.0]), cov: DMatrix::from_element(1, 1, 4.0) };
        let (lo, hi) = c.interval95()[0];
        assert_relative_eq!(lo, 1.0 - 2.0 * Z95);
        assert_relative_eq!(hi, 1.0 + 2.0 * Z95);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("3bis".parse::<PredictMethod>().unwrap(), PredictMethod::Shortcut3bis);
        assert!("x".parse::<PredictMethod>().is_err());
    }
}
