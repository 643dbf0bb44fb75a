use std::path::PathBuf;

use clap::ValueEnum;
use magmaclust::data::write_csv;
use magmaclust::{simulate_main, simulate::simulate_scheme_a_with_new, split_new_individual, HypothesisRegime, Individual, SimConfig};
use serde::Serialize;

use super::parse_regime;
use crate::error::{CliResult, Context};
use crate::output::{out_dir, write_json};

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Draws from the model: GP mean processes around linear prior means.
    Main,
    /// Piecewise-linear bumps on a common grid of `--n-i` points.
    A,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long, value_enum, default_value = "main")]
    scheme: Scheme,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Existing directory receiving data.csv, truth.json and manifest.json.
    #[arg(long)]
    out: PathBuf,

    /// Training individuals.
    #[arg(long, default_value_t = 50)]
    m: usize,

    /// Clusters (main scheme).
    #[arg(long, default_value_t = 3)]
    k: usize,

    /// Observations per individual.
    #[arg(long, default_value_t = 30)]
    n_i: usize,

    /// Candidate timestamps (main scheme).
    #[arg(long, default_value_t = 200)]
    n_pool: usize,

    /// Generating regime (main scheme).
    #[arg(long, default_value = "H00", value_parser = parse_regime)]
    regime: HypothesisRegime,

    /// Held-out individuals, written to new_obs.csv / new_test.csv.
    #[arg(long, default_value_t = 0)]
    n_new: usize,

    /// Leading points of each held-out individual that count as observed.
    #[arg(long, default_value_t = 20)]
    n_obs: usize,

    /// Observe every individual on the whole candidate grid (main scheme).
    #[arg(long)]
    common_grid: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    scheme: Scheme,
    seed: u64,
    config: Option<&'a SimConfig>,
    m: usize,
    n_i: usize,
    n_new: usize,
    n_obs: usize,
    files: Vec<&'static str>,
}

fn write_individuals(path: PathBuf, inds: &[Individual]) -> CliResult<()> {
    let f = std::fs::File::create(&path).context(format!("creating {}", path.display()))?;
    write_csv(f, inds).context(format!("writing {}", path.display()))
}

pub fn run(a: Args) -> CliResult<()> {
    let dir = out_dir(&a.out)?;
    let cfg = SimConfig {
        seed: a.seed,
        m: a.m,
        n_new: a.n_new,
        k: a.k,
        n_pool: a.n_pool,
        n_i: a.n_i,
        regime: a.regime,
        common_grid: a.common_grid,
        ..Default::default()
    };
    let sim = match a.scheme {
        Scheme::Main => simulate_main(&cfg),
        Scheme::A => simulate_scheme_a_with_new(a.seed, a.m, a.n_i, a.n_new),
    }
    .context("simulating")?;

    let mut files = vec!["data.csv", "truth.json", "manifest.json"];
    write_individuals(dir.join("data.csv"), &sim.data.individuals)?;
    write_json(dir.join("truth.json"), &sim.truth)?;
    if !sim.new_individuals.is_empty() {
        let mut obs = Vec::new();
        let mut test = Vec::new();
        for ind in &sim.new_individuals {
            let (o, t) = split_new_individual(ind, a.n_obs).context(format!("splitting `{}`", ind.id))?;
            obs.push(o);
            test.push(t);
        }
        write_individuals(dir.join("new_obs.csv"), &obs)?;
        write_individuals(dir.join("new_test.csv"), &test)?;
        files.extend(["new_obs.csv", "new_test.csv"]);
    }
    let manifest = Manifest {
        command: "simulate",
        scheme: a.scheme,
        seed: a.seed,
        config: matches!(a.scheme, Scheme::Main).then_some(&cfg),
        m: a.m,
        n_i: a.n_i,
        n_new: a.n_new,
        n_obs: a.n_obs,
        files,
    };
    write_json(dir.join("manifest.json"), &manifest)?;
    println!(
        "simulated {} individuals ({} observations) and {} held out into {}",
        sim.data.m(),
        sim.data.individuals.iter().map(Individual::len).sum::<usize>(),
        sim.new_individuals.len(),
        dir.display()
    );
    Ok(())
}
