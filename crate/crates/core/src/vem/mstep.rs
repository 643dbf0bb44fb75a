use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_dims, HyperParams, HypothesisRegime, MeanProcessPosterior, ModelConfig, Responsibilities};
use crate::data::Dataset;
use crate::error::Result;
use crate::kernel::{cov_gradients, model_cov, KernelParams, NoiseParam};
use crate::linalg::{sub_matrix, sub_vector, LN_2PI};
use crate::optim::{maximize, OptimStatus};

/// Closed-form mixing proportions: column means of `τ`.
pub fn update_pi(tau: &Responsibilities) -> Vec<f64> {
    let m = tau.m() as f64;
    tau.tau.column_iter().map(|c| c.sum() / m).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Gamma,
    Theta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub kind: BlockKind,
    pub index: usize,
    pub start_value: f64,
    pub end_value: f64,
    pub iterations: usize,
    /// False when the optimizer could not run or did not improve; the previous
    /// values are then kept.
    pub ok: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MStepReport {
    pub blocks: Vec<BlockReport>,
}

impl MStepReport {
    pub fn failures(&self) -> usize {
        self.blocks.iter().filter(|b| !b.ok).count()
    }
}

/// `−½ [w (n log 2π + log|Σ|) + tr(Σ⁻¹ S)]` and its gradient
/// `½ tr[(Σ⁻¹ S Σ⁻¹ − w Σ⁻¹) ∂Σ]`: the expected log-density of `w` Gaussian
/// draws whose summed second moment is `S`.
fn scatter_objective(
    t: &[f64],
    p: &KernelParams,
    noise: Option<&NoiseParam>,
    s: &DMatrix<f64>,
    w: f64,
    cfg: &ModelConfig,
) -> Result<(f64, Vec<f64>)> {
    let cov = model_cov(t, p, noise, cfg.rel_jitter)?;
    let n = t.len() as f64;
    let inv = cov.chol().inverse();
    let inv_s = &inv * s;
    let value = -0.5 * (w * (n * LN_2PI + cov.chol().log_det()) + inv_s.trace());
    let a = &inv_s * &inv - &inv * w;
    let grads = cov_gradients(t, p, noise, cov.jitter);
    let grad = grads.iter().map(|g| 0.5 * a.component_mul(g).sum()).collect();
    Ok((value, grad))
}

/// Mean-process part of the ELBO for one `γ` set, as a function of `γ`:
/// `scatter` is `Σ_k [(m̂_k − m_k)(m̂_k − m_k)ᵀ + Ĉ_k]` over the clusters
/// sharing the set and `weight` their number.
pub fn cluster_objective(
    grid: &[f64],
    gamma: &KernelParams,
    scatter: &DMatrix<f64>,
    weight: f64,
    cfg: &ModelConfig,
) -> Result<(f64, Vec<f64>)> {
    scatter_objective(grid, gamma, None, scatter, weight, cfg)
}

/// Data-fit part of the ELBO for one individual as a function of `(θ, σ²)`,
/// with `scatter = Σ_k τ_ik [r_k r_kᵀ + Ĉ_k^{t_i}]`, `r_k = y − m̂_k(t_i)`.
/// The gradient is ordered `[log v, log ℓ, log σ²]`.
pub fn individual_objective(
    t: &[f64],
    theta: &KernelParams,
    noise: &NoiseParam,
    scatter: &DMatrix<f64>,
    weight: f64,
    cfg: &ModelConfig,
) -> Result<(f64, Vec<f64>)> {
    scatter_objective(t, theta, Some(noise), scatter, weight, cfg)
}

fn cluster_scatter(mp: &MeanProcessPosterior, k: usize) -> DMatrix<f64> {
    let c = &mp.clusters[k];
    let r = &c.mean - &c.prior_mean;
    &r * r.transpose() + &c.cov
}

fn individual_scatter(data: &Dataset, tau: &Responsibilities, mp: &MeanProcessPosterior, i: usize) -> (DMatrix<f64>, f64) {
    let idx = &data.grid.index[i];
    let y = data.individuals[i].y_vec();
    let n = idx.len();
    let mut s = DMatrix::zeros(n, n);
    let mut w = 0.0;
    for (k, c) in mp.clusters.iter().enumerate() {
        let t = tau.tau[(i, k)];
        if t == 0.0 {
            continue;
        }
        let r = &y - sub_vector(&c.mean, idx);
        s += (&r * r.transpose() + sub_matrix(&c.cov, idx)) * t;
        w += t;
    }
    (s, w)
}

fn nan_result(dim: usize) -> (f64, Vec<f64>) {
    (f64::NAN, vec![0.0; dim])
}

/// Runs the optimizer on one block, keeping `x0` if nothing better is found.
fn optimize_block<F>(kind: BlockKind, index: usize, x0: Vec<f64>, bounds: Vec<(f64, f64)>, cfg: &ModelConfig, f: F) -> (Vec<f64>, BlockReport)
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let dim = x0.len();
    let start_value = f(&x0).map(|r| r.0).unwrap_or(f64::NAN);
    let failed = |reason: String| {
        log::warn!("M-step {kind:?} block {index}: {reason}; keeping previous hyper-parameters");
        BlockReport { kind, index, start_value, end_value: start_value, iterations: 0, ok: false, converged: false }
    };
    let res = maximize(|x| f(x).unwrap_or_else(|_| nan_result(dim)), &x0, Some(&bounds), &cfg.optim);
    match res {
        Ok(r) if !(start_value > r.value) => {
            let report = BlockReport {
                kind,
                index,
                start_value,
                end_value: r.value,
                iterations: r.iterations,
                ok: true,
                converged: r.status == OptimStatus::Converged,
            };
            (r.x, report)
        }
        Ok(_) => (x0, failed("optimizer ended below its starting value".into())),
        Err(e) => (x0, failed(e.to_string())),
    }
}

/// Maximizes the ELBO over `Θ` given the variational distributions.
pub fn m_step(
    data: &Dataset,
    hp: &HyperParams,
    tau: &Responsibilities,
    mp: &MeanProcessPosterior,
    regime: HypothesisRegime,
    cfg: &ModelConfig,
) -> Result<(HyperParams, MStepReport)> {
    check_dims(data, hp, tau)?;
    hp.validate(regime, data.m(), hp.k())?;
    let k_count = hp.k();
    let grid = &data.grid.t;

    let cluster_s: Vec<DMatrix<f64>> = (0..k_count).into_par_iter().map(|k| cluster_scatter(mp, k)).collect();
    let gamma_groups: Vec<Vec<usize>> =
        if regime.shared_gamma() { vec![(0..k_count).collect()] } else { (0..k_count).map(|k| vec![k]).collect() };
    let gamma_out: Vec<(Vec<f64>, BlockReport)> = gamma_groups
        .par_iter()
        .enumerate()
        .map(|(g, members)| {
            let mut s = DMatrix::zeros(grid.len(), grid.len());
            for &k in members {
                s += &cluster_s[k];
            }
            let w = members.len() as f64;
            let p0 = &hp.gamma[g];
            optimize_block(BlockKind::Gamma, g, vec![p0.log_v, p0.log_l], cfg.bounds.kernel(), cfg, |x| {
                cluster_objective(grid, &KernelParams::from_log(x[0], x[1]), &s, w, cfg)
            })
        })
        .collect();

    let ind_s: Vec<(DMatrix<f64>, f64)> =
        (0..data.m()).into_par_iter().map(|i| individual_scatter(data, tau, mp, i)).collect();
    let theta_x0 = |j: usize| vec![hp.theta[j].log_v, hp.theta[j].log_l, hp.noise[j].log_sigma2];
    let theta_out: Vec<(Vec<f64>, BlockReport)> = if regime.shared_theta() {
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let theta = KernelParams::from_log(x[0], x[1]);
            let noise = NoiseParam::from_log(x[2]);
            let parts = (0..data.m())
                .into_par_iter()
                .map(|i| individual_objective(&data.individuals[i].t, &theta, &noise, &ind_s[i].0, ind_s[i].1, cfg))
                .collect::<Result<Vec<_>>>()?;
            let mut value = 0.0;
            let mut grad = vec![0.0; 3];
            for (v, g) in parts {
                value += v;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            Ok((value, grad))
        };
        vec![optimize_block(BlockKind::Theta, 0, theta_x0(0), cfg.bounds.kernel_noise(), cfg, f)]
    } else {
        (0..data.m())
            .into_par_iter()
            .map(|i| {
                let t = &data.individuals[i].t;
                let (s, w) = &ind_s[i];
                optimize_block(BlockKind::Theta, i, theta_x0(i), cfg.bounds.kernel_noise(), cfg, |x| {
                    individual_objective(t, &KernelParams::from_log(x[0], x[1]), &NoiseParam::from_log(x[2]), s, *w, cfg)
                })
            })
            .collect()
    };

    let mut report = MStepReport::default();
    let gamma = gamma_out
        .into_iter()
        .map(|(x, r)| {
            report.blocks.push(r);
            KernelParams::from_log(x[0], x[1])
        })
        .collect();
    let mut theta = Vec::with_capacity(theta_out.len());
    let mut noise = Vec::with_capacity(theta_out.len());
    for (x, r) in theta_out {
        report.blocks.push(r);
        theta.push(KernelParams::from_log(x[0], x[1]));
        noise.push(NoiseParam::from_log(x[2]));
    }
    let new = HyperParams { gamma, theta, noise, pi: update_pi(tau) };
    Ok((new, report))
}
