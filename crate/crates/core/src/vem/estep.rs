use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{
    check_dims, individual_terms, ClusterMeanPosterior, HyperParams, MeanProcessPosterior, ModelConfig, PriorMeans,
    Responsibilities,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{model_cov, CovMatrix};
use crate::linalg::{gaussian_logpdf, normalize_log_weights, sub_matrix, sub_vector, symmetrize, trace_product_sym, CholFactor};

/// Observations of one individual as seen from some grid: positions on that
/// grid plus `Ψ⁻¹` and `Ψ⁻¹ y` at the observed points.
#[derive(Clone, Copy, Debug)]
pub struct ObsBlock<'a> {
    pub idx: &'a [usize],
    pub psi_inv: &'a DMatrix<f64>,
    pub psi_inv_y: &'a DVector<f64>,
}

/// Gaussian hyper-posterior of every mean process on `grid`, given fixed
/// responsibilities `tau` (rows aligned with `blocks`).
///
/// With `C = LLᵀ`, `P = Σ τ Ψ̃⁻¹` and `h = Σ τ Ψ̃⁻¹ ỹ` (scattered onto the
/// grid), the posterior is computed through `B = I + Lᵀ P L = R Rᵀ`:
/// `Ĉ = (L R⁻ᵀ)(L R⁻ᵀ)ᵀ`, `m̂ = L B⁻¹ (L⁻¹ m + Lᵀ h)` and
/// `log|Ĉ| = log|C| − log|B|`. `B` has eigenvalues ≥ 1, so this stays stable
/// when `C` is close to singular.
pub fn mean_process_posterior(
    grid: &[f64],
    blocks: &[ObsBlock<'_>],
    tau: &DMatrix<f64>,
    hp: &HyperParams,
    prior: &PriorMeans,
    cfg: &ModelConfig,
) -> Result<MeanProcessPosterior> {
    if tau.nrows() != blocks.len() {
        return Err(Error::LengthMismatch { expected: blocks.len(), found: tau.nrows() });
    }
    let n = grid.len();
    let k_count = hp.k();
    // shared γ: one factorization serves every cluster
    let prior_covs = hp
        .gamma
        .iter()
        .map(|g| model_cov(grid, g, None, cfg.rel_jitter))
        .collect::<Result<Vec<_>>>()?;
    let clusters = (0..k_count)
        .into_par_iter()
        .map(|k| {
            let c = &prior_covs[if prior_covs.len() == 1 { 0 } else { k }];
            let mut p = DMatrix::<f64>::zeros(n, n);
            let mut h = DVector::<f64>::zeros(n);
            for (i, b) in blocks.iter().enumerate() {
                let w = tau[(i, k)];
                if w == 0.0 {
                    continue;
                }
                for (a, &ia) in b.idx.iter().enumerate() {
                    h[ia] += w * b.psi_inv_y[a];
                    for (bb, &ib) in b.idx.iter().enumerate() {
                        p[(ia, ib)] += w * b.psi_inv[(a, bb)];
                    }
                }
            }
            let prior_mean = prior.get(k).on_grid(grid);
            posterior_from_precision(c, &p, &h, prior_mean)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanProcessPosterior { grid: grid.to_vec(), clusters })
}

/// Posterior of `N(m, C)` combined with a Gaussian likelihood of natural
/// parameters `(P, h)`.
pub(crate) fn posterior_from_precision(
    c: &CovMatrix,
    p: &DMatrix<f64>,
    h: &DVector<f64>,
    prior_mean: DVector<f64>,
) -> Result<ClusterMeanPosterior> {
    let n = c.dim();
    let l = c.chol().l();
    let mut b = l.transpose() * p * &l;
    for a in 0..n {
        b[(a, a)] += 1.0;
    }
    symmetrize(&mut b);
    let r = CholFactor::new(b).ok_or_else(|| Error::NonPositiveDefinite {
        context: "mean-process hyper-posterior".into(),
        jitter: 0.0,
    })?;
    let rhs = c.chol().solve_lower(&prior_mean) + l.transpose() * h;
    let z = r.solve(&rhs);
    let mean = &l * z;
    let x = r.solve_lower_mat(&l.transpose());
    let mut cov = x.transpose() * x;
    symmetrize(&mut cov);
    let log_det = c.chol().log_det() - r.log_det();
    Ok(ClusterMeanPosterior { prior_mean, mean, cov, log_det })
}

/// Updates the mean-process hyper-posteriors on the pooled training grid.
pub fn e_step_mu(
    data: &Dataset,
    hp: &HyperParams,
    tau: &Responsibilities,
    prior: &PriorMeans,
    cfg: &ModelConfig,
) -> Result<MeanProcessPosterior> {
    check_dims(data, hp, tau)?;
    let terms = individual_terms(data, hp, cfg)?;
    let blocks: Vec<ObsBlock<'_>> = terms
        .iter()
        .zip(&data.grid.index)
        .map(|(t, idx)| ObsBlock { idx, psi_inv: &t.psi_inv, psi_inv_y: &t.psi_inv_y })
        .collect();
    mean_process_posterior(&data.grid.t, &blocks, &tau.tau, hp, prior, cfg)
}

/// `log N(y; m̂_k(t), Ψ)` and `tr(Ψ⁻¹ Ĉ_k^t)` for one individual and cluster.
pub(crate) fn fit_terms(
    y: &DVector<f64>,
    psi: &CovMatrix,
    psi_inv: &DMatrix<f64>,
    idx: &[usize],
    cluster: &ClusterMeanPosterior,
) -> Result<(f64, f64)> {
    let mean = sub_vector(&cluster.mean, idx);
    let ll = gaussian_logpdf(y, &mean, psi.chol())?;
    let tr = trace_product_sym(psi_inv, &sub_matrix(&cluster.cov, idx));
    Ok((ll, tr))
}

/// Unnormalised log-responsibilities of one individual:
/// `log π_k + log N(y; m̂_k(t), Ψ) − ½ tr(Ψ⁻¹ Ĉ_k^t)`.
pub fn tau_log_weights(
    y: &DVector<f64>,
    psi: &CovMatrix,
    idx: &[usize],
    mp: &MeanProcessPosterior,
    pi: &[f64],
) -> Result<Vec<f64>> {
    let psi_inv = psi.chol().inverse();
    mp.clusters
        .iter()
        .zip(pi)
        .map(|(c, &p)| {
            let (ll, tr) = fit_terms(y, psi, &psi_inv, idx, c)?;
            Ok(p.ln() + ll - 0.5 * tr)
        })
        .collect()
}

/// Updates the responsibilities given the current mean-process posteriors.
pub fn e_step_tau(
    data: &Dataset,
    hp: &HyperParams,
    mp: &MeanProcessPosterior,
    cfg: &ModelConfig,
) -> Result<Responsibilities> {
    if mp.k() != hp.k() {
        return Err(Error::LengthMismatch { expected: hp.k(), found: mp.k() });
    }
    if mp.grid.len() != data.n() {
        return Err(Error::LengthMismatch { expected: data.n(), found: mp.grid.len() });
    }
    let rows = (0..data.m())
        .into_par_iter()
        .map(|i| {
            let ind = &data.individuals[i];
            let psi = model_cov(&ind.t, hp.theta_for(i), Some(hp.noise_for(i)), cfg.rel_jitter)?;
            let logw = tau_log_weights(&ind.y_vec(), &psi, &data.grid.index[i], mp, &hp.pi)?;
            if logw.iter().all(|v| *v == f64::NEG_INFINITY) {
                return Err(Error::NonFiniteObjective);
            }
            Ok(normalize_log_weights(&logw))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = hp.k();
    Ok(Responsibilities { tau: DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]) })
}
