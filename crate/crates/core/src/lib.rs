//! Clustering and prediction of functional data with a mixture of multi-task
//! Gaussian processes, trained by variational EM.
//!
//! The usual flow: build a [`Dataset`], [`train`] for a given number of
//! clusters (or pick it with [`select_k`]), then call [`predict`] for a new,
//! partially observed individual.

pub mod data;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod predict;
pub mod selection;
pub mod simulate;
pub mod state;
pub mod vem;

pub use data::{Dataset, Individual, PooledGrid};
pub use error::{Error, Result};
pub use kernel::{KernelParams, NoiseParam};
pub use predict::{predict, MixturePrediction, PredictConfig, PredictMethod, Prediction};
pub use selection::{select_k, vbic, SelectionReport, VbicReport};
pub use simulate::{simulate_main, simulate_scheme_a, split_new_individual, SimConfig, Simulation};
pub use vem::{
    train, train_with_config, HyperParams, HypothesisRegime, InitConfig, MeanProcessPosterior, ModelConfig,
    PriorMean, PriorMeans, Responsibilities, StopConfig, TrainingState,
};
