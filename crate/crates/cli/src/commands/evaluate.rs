use std::path::PathBuf;

use magmaclust::{metrics, TrainingState};
use serde::{Deserialize, Serialize};

use super::predict::PredictionFile;
use crate::error::{CliError, CliResult, Context};
use crate::input::pick_individual;
use crate::output::{table, write_json};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// prediction.json written by `predict`.
    #[arg(long, requires = "truth")]
    prediction: Option<PathBuf>,

    /// Held-out points of the predicted individual (CSV or JSON).
    #[arg(long)]
    truth: Option<PathBuf>,

    /// Fitted model whose τ-argmax partition is scored.
    #[arg(long, requires = "labels")]
    model: Option<PathBuf>,

    /// JSON file with a `labels` array, e.g. truth.json from `simulate`.
    #[arg(long)]
    labels: Option<PathBuf>,

    /// Also write the metrics to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize)]
struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wcic95: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ari: Option<f64>,
}

#[derive(Deserialize)]
struct Labels {
    labels: Vec<usize>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> CliResult<T> {
    let text = std::fs::read_to_string(path).context(format!("reading {}", path.display()))?;
    serde_json::from_str(&text).context(format!("parsing {}", path.display()))
}

pub fn run(a: Args) -> CliResult<()> {
    if a.prediction.is_none() && a.model.is_none() {
        return Err(CliError::usage("nothing to evaluate: give --prediction/--truth and/or --model/--labels"));
    }
    let mut m = Metrics::default();
    if let (Some(pred_path), Some(truth_path)) = (&a.prediction, &a.truth) {
        let pred: PredictionFile = read_json(pred_path)?;
        let truth = pick_individual(truth_path, Some(&pred.id))?;
        let mix = pred.mixture()?;
        let j: Vec<usize> = truth
            .t
            .iter()
            .map(|&t| {
                mix.t.iter().position(|&s| (s - t).abs() <= 1e-9).ok_or_else(|| CliError::Core {
                    context: "matching held-out timestamps".into(),
                    source: magmaclust::Error::UnresolvedTimestamp { id: truth.id.clone(), t },
                })
            })
            .collect::<CliResult<_>>()?;
        let mean = mix.mean();
        let at: Vec<f64> = j.iter().map(|&j| mean[j]).collect();
        m.mse = Some(metrics::mse(&at, &truth.y).context("computing MSE")?);
        m.wcic95 = Some(metrics::wcic95(&mix, &truth.t, &truth.y).context("computing WCIC95")?);
    }
    if let (Some(model_path), Some(labels_path)) = (&a.model, &a.labels) {
        let state = TrainingState::load(model_path).context(format!("loading {}", model_path.display()))?;
        let truth: Labels = read_json(labels_path)?;
        m.ari = Some(metrics::ari(&state.labels(), &truth.labels).context("computing ARI")?);
    }

    let fmt = |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |x| format!("{x:.digits$}"));
    println!(
        "{}",
        table(&["MSE", "WCIC95", "ARI"], &[vec![fmt(m.mse, 4), fmt(m.wcic95, 1), fmt(m.ari, 3)]])
    );
    if let Some(out) = a.out {
        write_json(out, &m)?;
    }
    Ok(())
}
