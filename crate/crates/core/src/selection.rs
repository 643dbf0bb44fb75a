//! Choice of the number of clusters by variational BIC.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::vem::{train_with_config, HypothesisRegime, InitConfig, ModelConfig, StopConfig, TrainingState};

/// Free scalars per individual-level set: `log v`, `log ℓ`, `log σ²`.
pub const THETA_SET_SIZE: usize = 3;
/// Free scalars per cluster-level set: `log v`, `log ℓ`.
pub const GAMMA_SET_SIZE: usize = 2;

/// `(α_i + α_k + K − 1) / 2 · log M`.
pub fn penalty(regime: HypothesisRegime, m: usize, k: usize) -> f64 {
    let alpha_i = THETA_SET_SIZE * regime.n_theta_sets(m);
    let alpha_k = GAMMA_SET_SIZE * regime.n_gamma_sets(k);
    (alpha_i + alpha_k + k - 1) as f64 / 2.0 * (m as f64).ln()
}

/// ELBO of a fitted state minus the penalty.
pub fn vbic(state: &TrainingState) -> f64 {
    state.elbo - penalty(state.regime, state.data.m(), state.k())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VbicReport {
    pub k: usize,
    pub elbo: f64,
    pub penalty: f64,
    pub vbic: f64,
    pub state: TrainingState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// One entry per candidate, ascending in `K`.
    pub reports: Vec<VbicReport>,
    pub selected: usize,
}

impl SelectionReport {
    pub fn best(&self) -> &VbicReport {
        self.reports.iter().find(|r| r.k == self.selected).expect("selected K is among the reports")
    }
}

/// Best-ELBO fit over `restarts` seeds derived from `init.seed`.
pub fn train_best_of(
    data: &Dataset,
    k: usize,
    regime: HypothesisRegime,
    init: &InitConfig,
    stop: &StopConfig,
    cfg: &ModelConfig,
    restarts: usize,
) -> Result<TrainingState> {
    let mut best: Option<TrainingState> = None;
    for r in 0..restarts.max(1) as u64 {
        let init_r = InitConfig { seed: init.seed.wrapping_add(r), ..init.clone() };
        let s = train_with_config(data, k, regime, &init_r, stop, cfg)?;
        if best.as_ref().is_none_or(|b| s.elbo > b.elbo) {
            best = Some(s);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Fits every `K` in `ks` and keeps the highest VBIC (smallest `K` on ties).
pub fn select_k(
    data: &Dataset,
    ks: &[usize],
    regime: HypothesisRegime,
    init: &InitConfig,
    stop: &StopConfig,
    cfg: &ModelConfig,
    restarts: usize,
) -> Result<SelectionReport> {
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::invalid("the range of K is empty"));
    }
    if ks[0] == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let reports = ks
        .par_iter()
        .map(|&k| {
            let state = train_best_of(data, k, regime, init, stop, cfg, restarts)?;
            let pen = penalty(regime, data.m(), k);
            Ok(VbicReport { k, elbo: state.elbo, penalty: pen, vbic: state.elbo - pen, state })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut selected = reports[0].k;
    let mut best = reports[0].vbic;
    for r in &reports[1..] {
        if r.vbic > best {
            best = r.vbic;
            selected = r.k;
        }
    }
    Ok(SelectionReport { reports, selected })
}
