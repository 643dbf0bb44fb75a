use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estep::fit_terms;
use super::{check_dims, individual_terms, HyperParams, MeanProcessPosterior, ModelConfig, Responsibilities};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::model_cov;
use crate::linalg::{gaussian_logpdf, LN_2PI};

/// The evidence lower bound split into its data-fit/membership part (summed
/// over individuals) and its mean-process part (summed over clusters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub individuals: f64,
    pub clusters: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.individuals + self.clusters
    }
}

pub fn elbo(
    data: &Dataset,
    hp: &HyperParams,
    tau: &Responsibilities,
    mp: &MeanProcessPosterior,
    cfg: &ModelConfig,
) -> Result<f64> {
    elbo_terms(data, hp, tau, mp, cfg).map(|t| t.total())
}

pub fn elbo_terms(
    data: &Dataset,
    hp: &HyperParams,
    tau: &Responsibilities,
    mp: &MeanProcessPosterior,
    cfg: &ModelConfig,
) -> Result<ElboTerms> {
    check_dims(data, hp, tau)?;
    if mp.k() != hp.k() || mp.grid.len() != data.n() {
        return Err(Error::invalid("mean-process posterior does not match the data/hyper-parameters"));
    }
    let terms = individual_terms(data, hp, cfg)?;
    let per_ind = (0..data.m())
        .into_par_iter()
        .map(|i| {
            let t = &terms[i];
            let mut acc = 0.0;
            for (k, cluster) in mp.clusters.iter().enumerate() {
                let w = tau.tau[(i, k)];
                if w == 0.0 {
                    continue;
                }
                let (ll, tr) = fit_terms(&t.y, &t.psi, &t.psi_inv, &data.grid.index[i], cluster)?;
                acc += w * (ll - 0.5 * tr + hp.pi[k].ln() - w.ln());
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?;

    let n = data.n() as f64;
    let per_cluster = (0..hp.k())
        .into_par_iter()
        .map(|k| {
            let c = model_cov(&data.grid.t, hp.gamma_for(k), None, cfg.rel_jitter)?;
            let post = &mp.clusters[k];
            let fit = gaussian_logpdf(&post.mean, &post.prior_mean, c.chol())?;
            let tr = c.chol().solve_mat(&post.cov).trace();
            // entropy of q(μ_k) combined with the prior normaliser
            Ok(fit - 0.5 * tr + 0.5 * post.log_det + 0.5 * n * (LN_2PI + 1.0))
        })
        .collect::<Result<Vec<f64>>>()?;

    let out = ElboTerms { individuals: per_ind.iter().sum(), clusters: per_cluster.iter().sum() };
    if !out.total().is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok(out)
}
