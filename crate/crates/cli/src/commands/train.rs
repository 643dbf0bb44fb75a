use std::path::{Path, PathBuf};
use std::time::Instant;

use magmaclust::selection::{penalty, train_best_of};
use magmaclust::vem::TrainStep;
use magmaclust::{HyperParams, HypothesisRegime, ModelConfig, TrainingState};
use serde::Serialize;

use super::FitArgs;
use crate::error::{CliError, CliResult, Context};
use crate::input::read_dataset;
use crate::output::{out_dir, write_csv, write_json, Num};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Training data: `id,t,y` CSV or JSON array of individuals.
    #[arg(long)]
    data: PathBuf,

    /// Number of clusters.
    #[arg(long)]
    k: usize,

    #[command(flatten)]
    fit: FitArgs,

    /// Existing directory receiving model.json, elbo_trace.csv, tau.csv and
    /// report.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
pub struct Report<'a> {
    pub k: usize,
    pub regime: HypothesisRegime,
    pub m: usize,
    pub n: usize,
    pub elbo: f64,
    pub penalty: f64,
    pub vbic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pi: &'a [f64],
    pub cluster_sizes: Vec<usize>,
    pub hp: &'a HyperParams,
    pub warnings: &'a [String],
}

impl<'a> Report<'a> {
    pub fn new(state: &'a TrainingState) -> Self {
        let (m, k) = (state.data.m(), state.k());
        let pen = penalty(state.regime, m, k);
        let mut cluster_sizes = vec![0; k];
        for l in state.labels() {
            cluster_sizes[l] += 1;
        }
        Report {
            k,
            regime: state.regime,
            m,
            n: state.data.n(),
            elbo: state.elbo,
            penalty: pen,
            vbic: state.elbo - pen,
            iterations: state.iterations,
            converged: state.converged,
            pi: &state.hp.pi,
            cluster_sizes,
            hp: &state.hp,
            warnings: &state.warnings,
        }
    }
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub seed: u64,
    pub elapsed_seconds: f64,
}

fn step_name(s: TrainStep) -> &'static str {
    match s {
        TrainStep::EStepMu => "e_step_mu",
        TrainStep::MStep => "m_step",
        TrainStep::EStepTau => "e_step_tau",
    }
}

/// model.json, elbo_trace.csv, tau.csv and report.json for one fitted state.
pub fn write_fit(dir: &Path, state: &TrainingState) -> CliResult<()> {
    state.save(dir.join("model.json")).context("writing model.json")?;
    write_csv(
        dir.join("elbo_trace.csv"),
        &["iteration".into(), "step".into(), "elbo".into()],
        state.trace.iter().map(|e| vec![e.iteration.to_string(), step_name(e.step).into(), e.elbo.num()]),
    )?;
    let mut header = vec!["id".to_string()];
    header.extend((1..=state.k()).map(|k| format!("k{k}")));
    write_csv(
        dir.join("tau.csv"),
        &header,
        state.data.individuals.iter().enumerate().map(|(i, ind)| {
            let mut row = vec![ind.id.clone()];
            row.extend(state.tau.row(i).iter().map(|x| x.num()));
            row
        }),
    )?;
    write_json(dir.join("report.json"), &Report::new(state))
}

pub fn run(a: Args) -> CliResult<()> {
    let dir = out_dir(&a.out)?;
    if a.k == 0 {
        return Err(CliError::usage("--k must be at least 1"));
    }
    let data = read_dataset(&a.data)?;
    let t0 = Instant::now();
    let state = train_best_of(&data, a.k, a.fit.regime, &a.fit.init(), &a.fit.stop(), &ModelConfig::default(), a.fit.restarts)
        .context(format!("training K = {} under {}", a.k, a.fit.regime))?;
    let elapsed = t0.elapsed().as_secs_f64();
    write_fit(dir, &state)?;
    write_json(dir.join("manifest.json"), &Manifest { command: "train", seed: a.fit.seed, elapsed_seconds: elapsed })?;

    let r = Report::new(&state);
    println!(
        "K = {} ({}), {} iterations, {}converged, ELBO {:.4}, VBIC {:.4}, {elapsed:.2}s",
        r.k,
        r.regime,
        r.iterations,
        if r.converged { "" } else { "not " },
        r.elbo,
        r.vbic
    );
    println!("cluster sizes {:?}", r.cluster_sizes);
    for w in &state.warnings {
        log::warn!("{w}");
    }
    Ok(())
}
