use std::path::PathBuf;

use magmaclust::predict::{density_heatmap, ClusterPrediction};
use magmaclust::{metrics, predict, KernelParams, MixturePrediction, NoiseParam, PredictConfig, PredictMethod, TrainingState};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};
use crate::input::{parse_linspace, pick_individual, List};
use crate::output::{out_dir, table, write_csv, write_json, Num};

pub const PREDICTION_FORMAT_VERSION: u32 = 1;

fn parse_method(s: &str) -> Result<PredictMethod, String> {
    s.parse().map_err(|e: magmaclust::Error| e.to_string())
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// model.json written by `train` or `select-k`.
    #[arg(long)]
    model: PathBuf,

    /// Observed points of the new individual (CSV or JSON).
    #[arg(long)]
    obs: PathBuf,

    /// Individual to use when the files hold several.
    #[arg(long)]
    id: Option<String>,

    /// Target timestamps, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, group = "target_spec")]
    t_pred: Option<Vec<f64>>,

    /// Target timestamps as `lo:hi:n`.
    #[arg(long, value_parser = parse_linspace, group = "target_spec")]
    t_grid: Option<List<f64>>,

    /// Held-out points: their timestamps are the targets and their values are
    /// used to report MSE and WCIC95.
    #[arg(long, group = "target_spec")]
    targets: Option<PathBuf>,

    /// auto, em, 3bis or 3ter.
    #[arg(long, default_value = "auto", value_parser = parse_method)]
    method: PredictMethod,

    /// Leave the training timestamps out of the working grid.
    #[arg(long)]
    no_training_grid: bool,

    /// Also write heatmap.csv with the mixture density.
    #[arg(long)]
    heatmap: bool,

    /// Output grid of the heatmap as `lo:hi:n` (default: covers ±4 sd).
    #[arg(long, value_parser = parse_linspace, requires = "heatmap")]
    y_grid: Option<List<f64>>,

    /// Also write collapsed.json, the most probable cluster's Gaussian.
    #[arg(long)]
    collapse: bool,

    /// Existing directory receiving prediction.json and prediction.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterOut {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var_diag: Vec<f64>,
    pub interval95: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// Indexed `[y][t]`.
    pub density: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mse: f64,
    pub wcic95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub format_version: u32,
    pub id: String,
    pub method: PredictMethod,
    pub iterations: usize,
    pub theta: KernelParams,
    pub noise: NoiseParam,
    pub t: Vec<f64>,
    pub tau: Vec<f64>,
    pub mixture_mean: Vec<f64>,
    pub most_probable: usize,
    pub clusters: Vec<ClusterOut>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<Heatmap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Scores>,
}

fn cluster_out(weight: f64, c: &ClusterPrediction) -> ClusterOut {
    ClusterOut {
        weight,
        mean: c.mean.as_slice().to_vec(),
        var_diag: c.cov.diagonal().as_slice().to_vec(),
        interval95: c.interval95(),
    }
}

impl PredictionFile {
    /// Mixture with diagonal covariances, enough for pointwise metrics.
    pub fn mixture(&self) -> CliResult<MixturePrediction> {
        let clusters = self
            .clusters
            .iter()
            .map(|c| ClusterPrediction {
                mean: DVector::from_vec(c.mean.clone()),
                cov: DMatrix::from_diagonal(&DVector::from_vec(c.var_diag.clone())),
            })
            .collect();
        MixturePrediction::new(self.t.clone(), self.clusters.iter().map(|c| c.weight).collect(), clusters)
            .context("rebuilding the prediction")
    }
}

fn default_y_grid(m: &MixturePrediction) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in &m.clusters {
        for (mu, s) in c.mean.iter().zip(c.sd()) {
            lo = lo.min(mu - 4.0 * s);
            hi = hi.max(mu + 4.0 * s);
        }
    }
    if lo >= hi {
        hi = lo + 1.0;
    }
    (0..100).map(|j| lo + (hi - lo) * j as f64 / 99.0).collect()
}

pub fn run(a: Args) -> CliResult<()> {
    let dir = out_dir(&a.out)?;
    let state = TrainingState::load(&a.model).context(format!("loading {}", a.model.display()))?;
    let obs = pick_individual(&a.obs, a.id.as_deref())?;
    let held_out = a.targets.as_ref().map(|p| pick_individual(p, Some(&obs.id))).transpose()?;
    let t_pred = match (&a.t_pred, &a.t_grid, &held_out) {
        (Some(t), _, _) => t.clone(),
        (_, Some(g), _) => g.0.clone(),
        (_, _, Some(h)) => h.t.clone(),
        _ => return Err(CliError::usage("give the targets with --t-pred, --t-grid or --targets")),
    };
    let cfg = PredictConfig { method: a.method, include_training_grid: !a.no_training_grid, ..Default::default() };
    let pred = predict(&state, &obs.t, &obs.y, &t_pred, &cfg).context(format!("predicting `{}`", obs.id))?;
    let mix = &pred.mixture;
    println!("prediction path: {:?} ({} iterations)", pred.new.method, pred.new.iterations);
    log::info!("prediction EM trace: {:?}", pred.new.trace);

    let scores = match &held_out {
        Some(h) => Some(Scores {
            mse: metrics::mse(&mix.mean(), &h.y).context("computing MSE")?,
            wcic95: metrics::wcic95(mix, &h.t, &h.y).context("computing WCIC95")?,
        }),
        None => None,
    };
    let heatmap = if a.heatmap {
        let y = a.y_grid.clone().map_or_else(|| default_y_grid(mix), |g| g.0);
        let density = density_heatmap(mix, &mix.t, &y).context("computing the heatmap")?;
        Some(Heatmap { t: mix.t.clone(), y, density })
    } else {
        None
    };

    let file = PredictionFile {
        format_version: PREDICTION_FORMAT_VERSION,
        id: obs.id.clone(),
        method: pred.new.method,
        iterations: pred.new.iterations,
        theta: pred.new.theta,
        noise: pred.new.noise,
        t: mix.t.clone(),
        tau: pred.new.tau.clone(),
        mixture_mean: mix.mean(),
        most_probable: mix.most_probable(),
        clusters: mix.weights.iter().zip(&mix.clusters).map(|(w, c)| cluster_out(*w, c)).collect(),
        heatmap: heatmap.clone(),
        scores: scores.clone(),
    };
    write_json(dir.join("prediction.json"), &file)?;
    let t = &file.t;
    write_csv(
        dir.join("prediction.csv"),
        &["cluster", "weight", "t", "mean", "var", "lower95", "upper95"].map(String::from),
        file.clusters
            .iter()
            .enumerate()
            .flat_map(|(k, c)| {
                (0..t.len()).map(move |j| {
                    vec![
                        (k + 1).to_string(),
                        c.weight.num(),
                        t[j].num(),
                        c.mean[j].num(),
                        c.var_diag[j].num(),
                        c.interval95[j].0.num(),
                        c.interval95[j].1.num(),
                    ]
                })
            })
            .chain(file.t.iter().zip(&file.mixture_mean).map(|(t, m)| {
                vec!["mixture".into(), "1".into(), t.num(), m.num(), String::new(), String::new(), String::new()]
            })),
    )?;
    if let Some(h) = &heatmap {
        let mut header = vec!["y".to_string()];
        header.extend(h.t.iter().map(|x| x.num()));
        write_csv(
            dir.join("heatmap.csv"),
            &header,
            h.y.iter().zip(&h.density).map(|(y, row)| {
                let mut r = vec![y.num()];
                r.extend(row.iter().map(|x| x.num()));
                r
            }),
        )?;
    }
    if a.collapse {
        let (k, c) = mix.collapsed();
        #[derive(Serialize)]
        struct Collapsed {
            cluster: usize,
            t: Vec<f64>,
            #[serde(flatten)]
            gaussian: ClusterOut,
        }
        write_json(dir.join("collapsed.json"), &Collapsed { cluster: k, t: mix.t.clone(), gaussian: cluster_out(mix.weights[k], c) })?;
    }

    let rows: Vec<Vec<String>> = file
        .clusters
        .iter()
        .enumerate()
        .map(|(k, c)| vec![(k + 1).to_string(), format!("{:.4}", c.weight)])
        .collect();
    println!("{}", table(&["cluster", "τ_*"], &rows));
    if let Some(s) = scores {
        println!("MSE {:.4}, WCIC95 {:.1}%", s.mse, s.wcic95);
    }
    Ok(())
}
