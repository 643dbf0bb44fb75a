pub mod evaluate;
pub mod predict;
pub mod select;
pub mod simulate;
pub mod train;

use magmaclust::{HypothesisRegime, InitConfig, StopConfig};

fn parse_regime(s: &str) -> Result<HypothesisRegime, String> {
    s.parse().map_err(|e: magmaclust::Error| e.to_string())
}

/// Options shared by `train` and `select-k`.
#[derive(clap::Args, Debug, Clone)]
pub struct FitArgs {
    /// Hyper-parameter sharing: H00, Hk0, H0i or Hki.
    #[arg(long, default_value = "H00", value_parser = parse_regime)]
    pub regime: HypothesisRegime,

    /// Seed of the k-means initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Relative ELBO change that stops training.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,

    #[arg(long, default_value_t = 25)]
    pub max_iter: usize,

    /// Independent initializations per K; the best ELBO is kept.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

impl FitArgs {
    pub fn init(&self) -> InitConfig {
        InitConfig::with_seed(self.seed)
    }

    pub fn stop(&self) -> StopConfig {
        StopConfig { tol: self.tol, max_iter: self.max_iter }
    }
}
