use std::path::PathBuf;
use std::time::Instant;

use magmaclust::{select_k, ModelConfig};
use serde::Serialize;

use super::train::{write_fit, Manifest};
use super::FitArgs;
use crate::error::{CliResult, Context};
use crate::input::{parse_k_range, read_dataset, List};
use crate::output::{out_dir, table, write_json};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Training data: `id,t,y` CSV or JSON array of individuals.
    #[arg(long)]
    data: PathBuf,

    /// Candidate K: `1..6` (either direction) or a list such as `1,2,4`.
    #[arg(long, default_value = "1..6", value_parser = parse_k_range)]
    k_range: List<usize>,

    #[command(flatten)]
    fit: FitArgs,

    /// Existing directory receiving selection.json and the selected fit.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Row {
    k: usize,
    elbo: f64,
    penalty: f64,
    vbic: f64,
    selected: bool,
}

#[derive(Serialize)]
struct Selection {
    regime: magmaclust::HypothesisRegime,
    selected: usize,
    rows: Vec<Row>,
}

pub fn run(a: Args) -> CliResult<()> {
    let dir = out_dir(&a.out)?;
    let data = read_dataset(&a.data)?;
    let t0 = Instant::now();
    let report = select_k(&data, &a.k_range.0, a.fit.regime, &a.fit.init(), &a.fit.stop(), &ModelConfig::default(), a.fit.restarts)
        .context("selecting K")?;
    let elapsed = t0.elapsed().as_secs_f64();

    let rows: Vec<Row> = report
        .reports
        .iter()
        .map(|r| Row { k: r.k, elbo: r.elbo, penalty: r.penalty, vbic: r.vbic, selected: r.k == report.selected })
        .collect();
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                format!("{:.3}", r.elbo),
                format!("{:.3}", r.penalty),
                format!("{:.3}", r.vbic),
                if r.selected { "*".into() } else { String::new() },
            ]
        })
        .collect();
    println!("{}", table(&["K", "ELBO", "penalty", "VBIC", "selected"], &cells));

    write_json(dir.join("selection.json"), &Selection { regime: a.fit.regime, selected: report.selected, rows })?;
    write_fit(dir, &report.best().state)?;
    write_json(dir.join("manifest.json"), &Manifest { command: "select-k", seed: a.fit.seed, elapsed_seconds: elapsed })?;
    println!("selected K = {}", report.selected);
    Ok(())
}
