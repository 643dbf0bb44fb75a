//! Argument parsing helpers and data loading.

use std::path::Path;

use magmaclust::data::{read_csv, read_json};
use magmaclust::{Dataset, Individual};

use crate::error::{CliError, CliResult, Context};

/// Individuals from a `.json` array or an `id,t,y` CSV.
pub fn read_individuals(path: &Path) -> CliResult<Vec<Individual>> {
    let ctx = format!("reading {}", path.display());
    let file = std::fs::File::open(path).context(ctx.clone())?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        read_json(file).context(ctx)
    } else {
        read_csv(file).context(ctx)
    }
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    Dataset::new(read_individuals(path)?).context(format!("building the data set from {}", path.display()))
}

/// The individual named `id`, or the only one in the file.
pub fn pick_individual(path: &Path, id: Option<&str>) -> CliResult<Individual> {
    let mut inds = read_individuals(path)?;
    match id {
        Some(id) => inds
            .into_iter()
            .find(|i| i.id == id)
            .ok_or_else(|| CliError::usage(format!("no individual `{id}` in {}", path.display()))),
        None if inds.len() == 1 => Ok(inds.remove(0)),
        None => Err(CliError::usage(format!(
            "{} holds {} individuals; choose one with --id",
            path.display(),
            inds.len()
        ))),
    }
}

/// A list of values parsed from a single argument.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

/// `lo:hi:n`, `n` evenly spaced points including both ends.
pub fn parse_linspace(s: &str) -> Result<List<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(format!("expected lo:hi:n, got `{s}`"));
    };
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad point count `{n}`"))?;
    if !(lo.is_finite() && hi.is_finite()) || n == 0 || (n > 1 && lo >= hi) {
        return Err(format!("`{s}` does not describe a grid (need lo < hi, n ≥ 1)"));
    }
    if n == 1 {
        return Ok(List(vec![lo]));
    }
    Ok(List((0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()))
}

/// `a..b` (inclusive, either direction) or a comma-separated list; returned
/// sorted ascending without duplicates.
pub fn parse_k_range(s: &str) -> Result<List<usize>, String> {
    let bad = |x: &str| format!("bad K `{x}` in `{s}`");
    let mut ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad(a))?;
        let b: usize = b.trim_start_matches('=').trim().parse().map_err(|_| bad(b))?;
        (a.min(b)..=a.max(b)).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad(x))).collect::<Result<_, _>>()?
    };
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(format!("K range `{s}` must contain positive values"));
    }
    Ok(List(ks))
}
