use serde::{Deserialize, Serialize};

use super::{
    e_step_mu, e_step_tau, elbo, initial_hyperparams, kmeans_responsibilities, m_step, update_pi, HyperParams,
    HypothesisRegime, InitConfig, InitStrategy, MeanProcessPosterior, ModelConfig, PriorMeans, Responsibilities,
};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopConfig {
    /// Relative ELBO change between consecutive iterations below which
    /// training stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig { tol: 1e-3, max_iter: 25 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStep {
    EStepMu,
    MStep,
    EStepTau,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub step: TrainStep,
    pub elbo: f64,
}

/// Everything produced by a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub regime: HypothesisRegime,
    pub data: Dataset,
    pub hp: HyperParams,
    pub tau: Responsibilities,
    pub posterior: MeanProcessPosterior,
    pub prior_means: PriorMeans,
    pub config: ModelConfig,
    pub elbo: f64,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl TrainingState {
    pub fn k(&self) -> usize {
        self.hp.k()
    }

    /// Most probable cluster of every training individual.
    pub fn labels(&self) -> Vec<usize> {
        self.tau.argmax()
    }
}

/// Trains with default numerical settings.
pub fn train(data: &Dataset, k: usize, regime: HypothesisRegime, init: &InitConfig, stop: &StopConfig) -> Result<TrainingState> {
    train_with_config(data, k, regime, init, stop, &ModelConfig::default())
}

fn clamp_hp(hp: &HyperParams, cfg: &ModelConfig) -> HyperParams {
    HyperParams {
        gamma: hp.gamma.iter().map(|g| cfg.bounds.clamp_kernel(g)).collect(),
        theta: hp.theta.iter().map(|t| cfg.bounds.clamp_kernel(t)).collect(),
        noise: hp.noise.iter().map(|s| cfg.bounds.clamp_noise(s)).collect(),
        pi: hp.pi.clone(),
    }
}

pub fn train_with_config(
    data: &Dataset,
    k: usize,
    regime: HypothesisRegime,
    init: &InitConfig,
    stop: &StopConfig,
    cfg: &ModelConfig,
) -> Result<TrainingState> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if data.m() == 0 {
        return Err(Error::invalid("at least one individual is required"));
    }
    init.prior_means.validate(k)?;
    let prior = &init.prior_means;

    let tau = match &init.strategy {
        InitStrategy::KMeans { restarts } => kmeans_responsibilities(data, k, *restarts, init.epsilon, init.seed)?,
        InitStrategy::Given { tau } => {
            tau.validate()?;
            if tau.m() != data.m() || tau.k() != k {
                return Err(Error::invalid(format!(
                    "initial responsibilities are {}×{}, expected {}×{k}",
                    tau.m(),
                    tau.k(),
                    data.m()
                )));
            }
            tau.clone()
        }
    };
    let mut hp = match &init.hp {
        Some(hp) => hp.clone(),
        None => initial_hyperparams(data, k, regime, prior),
    };
    hp.pi = update_pi(&tau);
    hp.validate(regime, data.m(), k)?;
    let mut hp = clamp_hp(&hp, cfg);
    let mut tau = tau;

    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut prev_end: Option<f64> = None;
    let mut iterations = 0;
    let mut mp;
    loop {
        iterations += 1;
        let it = iterations;
        mp = e_step_mu(data, &hp, &tau, prior, cfg)?;
        trace.push(TraceEntry { iteration: it, step: TrainStep::EStepMu, elbo: elbo(data, &hp, &tau, &mp, cfg)? });

        let (new_hp, report) = m_step(data, &hp, &tau, &mp, regime, cfg)?;
        if report.failures() > 0 {
            warnings.push(format!("iteration {it}: {} M-step block(s) kept their previous values", report.failures()));
        }
        hp = new_hp;
        trace.push(TraceEntry { iteration: it, step: TrainStep::MStep, elbo: elbo(data, &hp, &tau, &mp, cfg)? });

        tau = e_step_tau(data, &hp, &mp, cfg)?;
        let end = elbo(data, &hp, &tau, &mp, cfg)?;
        trace.push(TraceEntry { iteration: it, step: TrainStep::EStepTau, elbo: end });

        if let Some(prev) = prev_end {
            if ((end - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < stop.tol {
                converged = true;
            }
        }
        prev_end = Some(end);
        if converged || iterations >= stop.max_iter {
            break;
        }
    }
    // refresh the mean processes so that they match the returned τ and Θ
    mp = e_step_mu(data, &hp, &tau, prior, cfg)?;
    let final_elbo = elbo(data, &hp, &tau, &mp, cfg)?;
    trace.push(TraceEntry { iteration: iterations, step: TrainStep::EStepMu, elbo: final_elbo });

    for c in 0..k {
        let max = tau.tau.column(c).max();
        if max < 1e-6 {
            let msg = format!("cluster {c} is degenerate (max responsibility {max:.3e}); it keeps its prior mean process");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    if !converged {
        log::info!("training stopped after {iterations} iterations without reaching tol {}", stop.tol);
    }

    Ok(TrainingState {
        regime,
        data: data.clone(),
        hp,
        tau,
        posterior: mp,
        prior_means: prior.clone(),
        config: *cfg,
        elbo: final_elbo,
        trace,
        iterations,
        converged,
        warnings,
    })
}
