//! Individuals, the pooled timestamp grid, and CSV/JSON ingestion.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance under which two timestamps are considered identical.
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;

/// One observed series: strictly increasing timestamps and matching outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

impl Individual {
    pub fn new(id: impl Into<String>, t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let ind = Individual { id: id.into(), t, y };
        ind.validate()?;
        Ok(ind)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.len() != self.y.len() {
            return Err(Error::LengthMismatch { expected: self.t.len(), found: self.y.len() });
        }
        if self.t.is_empty() {
            return Err(Error::invalid(format!("individual `{}` has no observations", self.id)));
        }
        if self.t.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("individual `{}` has non-finite values", self.id)));
        }
        if let Some(w) = self.t.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "individual `{}`: timestamps must be strictly increasing ({} then {})",
                self.id, w[0], w[1]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn y_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y)
    }

    /// Keeps only the observations at `positions` (indices into `t`).
    pub fn select(&self, positions: &[usize]) -> Individual {
        Individual {
            id: self.id.clone(),
            t: positions.iter().map(|&p| self.t[p]).collect(),
            y: positions.iter().map(|&p| self.y[p]).collect(),
        }
    }
}

/// Sorted union of all timestamps plus, for every individual, the pooled
/// position of each of its timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledGrid {
    pub t: Vec<f64>,
    pub index: Vec<Vec<usize>>,
}

impl PooledGrid {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Merges timestamps closer than `tol` (the smallest value of a merged run is
/// kept as representative) and maps every individual onto the result.
pub fn build_pooled_grid(individuals: &[Individual], tol: f64) -> Result<PooledGrid> {
    if individuals.is_empty() {
        return Err(Error::invalid("at least one individual is required"));
    }
    let mut all: Vec<(f64, usize, usize)> = individuals
        .iter()
        .enumerate()
        .flat_map(|(i, ind)| ind.t.iter().enumerate().map(move |(p, &t)| (t, i, p)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut t: Vec<f64> = Vec::new();
    let mut index: Vec<Vec<usize>> = individuals.iter().map(|ind| vec![usize::MAX; ind.len()]).collect();
    // last pooled slot claimed by each individual, to detect collapses
    let mut last_slot: Vec<Option<usize>> = vec![None; individuals.len()];
    for (ts, i, p) in all {
        let rep = t.last().copied();
        let slot = match rep {
            Some(r) if (ts - r).abs() <= tol => t.len() - 1,
            _ => {
                t.push(ts);
                t.len() - 1
            }
        };
        if last_slot[i] == Some(slot) {
            let prev = index[i].iter().position(|&s| s == slot).unwrap_or(0);
            return Err(Error::DuplicateWithinIndividual {
                id: individuals[i].id.clone(),
                first: individuals[i].t[prev],
                second: ts,
            });
        }
        last_slot[i] = Some(slot);
        index[i][p] = slot;
    }
    Ok(PooledGrid { t, index })
}

/// Position of `x` in the sorted `grid`, if some grid point lies within `tol`.
pub fn locate(grid: &[f64], x: f64, tol: f64) -> Option<usize> {
    let pos = grid.partition_point(|&g| g < x - tol);
    (pos < grid.len() && (grid[pos] - x).abs() <= tol).then_some(pos)
}

/// Resolves every timestamp of `ts` in `grid`, failing on the first miss.
pub fn resolve_all(id: &str, ts: &[f64], grid: &[f64], tol: f64) -> Result<Vec<usize>> {
    ts.iter()
        .map(|&t| locate(grid, t, tol).ok_or_else(|| Error::UnresolvedTimestamp { id: id.to_string(), t }))
        .collect()
}

/// An individual's outputs scattered onto the pooled grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedObs {
    pub y_tilde: DVector<f64>,
    pub mask: Vec<bool>,
}

impl ExpandedObs {
    /// Values at the observed positions, in grid order.
    pub fn restrict(&self) -> Vec<f64> {
        self.mask.iter().zip(self.y_tilde.iter()).filter(|(m, _)| **m).map(|(_, v)| *v).collect()
    }
}

pub fn expand(ind: &Individual, grid: &[f64], tol: f64) -> Result<ExpandedObs> {
    let idx = resolve_all(&ind.id, &ind.t, grid, tol)?;
    let mut y_tilde = DVector::zeros(grid.len());
    let mut mask = vec![false; grid.len()];
    for (&p, &y) in idx.iter().zip(&ind.y) {
        y_tilde[p] = y;
        mask[p] = true;
    }
    Ok(ExpandedObs { y_tilde, mask })
}

/// Training data: the individuals and their pooled grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub individuals: Vec<Individual>,
    pub grid: PooledGrid,
    pub tol: f64,
}

impl Dataset {
    pub fn new(individuals: Vec<Individual>) -> Result<Self> {
        Self::with_tolerance(individuals, DEFAULT_MERGE_TOL)
    }

    pub fn with_tolerance(individuals: Vec<Individual>, tol: f64) -> Result<Self> {
        for ind in &individuals {
            ind.validate()?;
        }
        let mut seen = HashMap::new();
        for ind in &individuals {
            if seen.insert(ind.id.as_str(), ()).is_some() {
                return Err(Error::invalid(format!("duplicate individual id `{}`", ind.id)));
            }
        }
        let grid = build_pooled_grid(&individuals, tol)?;
        Ok(Dataset { individuals, grid, tol })
    }

    pub fn m(&self) -> usize {
        self.individuals.len()
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn expand(&self, i: usize) -> ExpandedObs {
        let ind = &self.individuals[i];
        let mut y_tilde = DVector::zeros(self.n());
        let mut mask = vec![false; self.n()];
        for (&p, &y) in self.grid.index[i].iter().zip(&ind.y) {
            y_tilde[p] = y;
            mask[p] = true;
        }
        ExpandedObs { y_tilde, mask }
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::new(read_csv(std::fs::File::open(path)?)?)
    }

    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::new(read_json(std::fs::File::open(path)?)?)
    }
}

/// Reads `id,t,y` rows (with header). Rows of one id may appear in any order
/// and are sorted by timestamp; individuals keep first-appearance order.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Individual>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column `{name}`") })
    };
    let (ci, ct, cy) = (col("id")?, col("t")?, col("y")?);

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, f64, usize)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |c: usize| {
            rec.get(c).ok_or_else(|| Error::Parse { line, message: "missing field".into() })
        };
        let num = |c: usize, what: &str| -> Result<f64> {
            let s = field(c)?;
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("cannot parse {what} `{s}` as a number") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("{what} is not finite") });
            }
            Ok(v)
        };
        let id = field(ci)?.to_string();
        if id.is_empty() {
            return Err(Error::Parse { line, message: "empty id".into() });
        }
        let (t, y) = (num(ct, "t")?, num(cy, "y")?);
        rows.entry(id.clone())
            .or_insert_with(|| {
                order.push(id.clone());
                Vec::new()
            })
            .push((t, y, line));
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut pts = rows.remove(&id).unwrap_or_default();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(w) = pts.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                line: w[1].2,
                message: format!("duplicate timestamp {} for `{id}` (also on line {})", w[1].0, w[0].2),
            });
        }
        let (t, y) = pts.iter().map(|p| (p.0, p.1)).unzip();
        out.push(Individual::new(id, t, y)?);
    }
    if out.is_empty() {
        return Err(Error::Parse { line: 1, message: "no data rows".into() });
    }
    Ok(out)
}

pub fn write_csv<W: Write>(writer: W, individuals: &[Individual]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "t", "y"]).map_err(csv_io)?;
    for ind in individuals {
        for (t, y) in ind.t.iter().zip(&ind.y) {
            w.write_record([ind.id.as_str(), &format!("{t:?}"), &format!("{y:?}")]).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Reads a JSON array of `{id, t: [...], y: [...]}` objects.
pub fn read_json<R: Read>(reader: R) -> Result<Vec<Individual>> {
    let inds: Vec<Individual> = serde_json::from_reader(reader)?;
    for ind in &inds {
        ind.validate()?;
    }
    Ok(inds)
}
