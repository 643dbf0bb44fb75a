use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{interpolate, HyperParams, HypothesisRegime, PriorMeans, Responsibilities};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{KernelParams, NoiseParam};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// k-means on interpolated curves, best of `restarts` Lloyd runs.
    KMeans { restarts: usize },
    /// Responsibilities supplied by the caller.
    Given { tau: Responsibilities },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::KMeans { restarts: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub seed: u64,
    pub strategy: InitStrategy,
    /// Mass moved off hard k-means labels: rows become `1 − (K−1)ε` / `ε`.
    pub epsilon: f64,
    /// Starting hyper-parameters; derived from the data when absent.
    pub hp: Option<HyperParams>,
    pub prior_means: PriorMeans,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            seed: 0,
            strategy: InitStrategy::default(),
            epsilon: 1e-2,
            hp: None,
            prior_means: PriorMeans::zero(),
        }
    }
}

impl InitConfig {
    pub fn with_seed(seed: u64) -> Self {
        InitConfig { seed, ..Default::default() }
    }
}

/// One feature row per individual: its curve linearly interpolated onto the
/// pooled grid inside its observed range, and outside it the mean over the
/// individuals whose range covers that grid point.
pub fn kmeans_features(data: &Dataset) -> DMatrix<f64> {
    let grid = &data.grid.t;
    let (m, n) = (data.m(), grid.len());
    let mut feats = DMatrix::from_element(m, n, f64::NAN);
    for (i, ind) in data.individuals.iter().enumerate() {
        let (lo, hi) = (ind.t[0], ind.t[ind.t.len() - 1]);
        for (j, &x) in grid.iter().enumerate() {
            if x >= lo && x <= hi {
                feats[(i, j)] = interpolate(&ind.t, &ind.y, x);
            }
        }
    }
    let all: Vec<f64> = feats.iter().copied().filter(|v| !v.is_nan()).collect();
    let global = all.iter().sum::<f64>() / all.len().max(1) as f64;
    for j in 0..n {
        let col: Vec<f64> = feats.column(j).iter().copied().filter(|v| !v.is_nan()).collect();
        let fill = if col.is_empty() { global } else { col.iter().sum::<f64>() / col.len() as f64 };
        for i in 0..m {
            if feats[(i, j)].is_nan() {
                feats[(i, j)] = fill;
            }
        }
    }
    feats
}

fn sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, k: usize) -> f64 {
    x.row(i).iter().zip(c.row(k).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Lloyd's algorithm from a k-means++ seeding. Returns labels and inertia.
fn lloyd(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let (m, d) = x.shape();
    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..m);
    centers.row_mut(0).copy_from(&x.row(first));
    let mut dist: Vec<f64> = (0..m).map(|i| sq_dist(x, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, w) in dist.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..m)
        };
        centers.row_mut(c).copy_from(&x.row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(x, i, &centers, c));
        }
    }

    let mut labels = vec![0; m];
    for iter in 0..300 {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = (0..k)
                .map(|c| (c, sq_dist(x, i, &centers, c)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
                .0;
            if best != *label {
                *label = best;
                changed = true;
            }
        }
        if !changed && iter > 0 {
            break;
        }
        let mut sums = DMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            let mut row = sums.row_mut(l);
            row += x.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let row = sums.row(c) / counts[c] as f64;
                centers.row_mut(c).copy_from(&row);
            } else {
                // empty cluster: restart it on the point farthest from its centre
                let far = (0..m)
                    .map(|i| (i, sq_dist(x, i, &centers, labels[i])))
                    .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
                    .0;
                centers.row_mut(c).copy_from(&x.row(far));
            }
        }
    }
    let inertia = (0..m).map(|i| sq_dist(x, i, &centers, labels[i])).sum();
    (labels, inertia)
}

/// Softened k-means responsibilities.
pub fn kmeans_responsibilities(data: &Dataset, k: usize, restarts: usize, epsilon: f64, seed: u64) -> Result<Responsibilities> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if k > data.m() {
        return Err(Error::invalid(format!("K = {k} exceeds the number of individuals ({})", data.m())));
    }
    if !(0.0..1.0 / k as f64).contains(&epsilon) && k > 1 {
        return Err(Error::invalid("epsilon must lie in [0, 1/K)"));
    }
    let x = kmeans_features(data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(&x, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let labels = best.expect("at least one run").0;
    let eps = if k == 1 { 0.0 } else { epsilon };
    let hi = 1.0 - (k as f64 - 1.0) * eps;
    let tau = DMatrix::from_fn(data.m(), k, |i, c| if labels[i] == c { hi } else { eps });
    Ok(Responsibilities { tau })
}

/// Data-driven starting point: `γ` sized on the spread of all outputs around
/// the prior mean, `θ` on the within-individual spread, lengthscales at a
/// fifth of the observed time span and noise at 5% of the individual
/// variance.
pub fn initial_hyperparams(data: &Dataset, k: usize, regime: HypothesisRegime, prior: &PriorMeans) -> HyperParams {
    let mut sq = 0.0;
    let mut count = 0usize;
    let mut within = 0.0;
    for ind in &data.individuals {
        let mean = ind.y.iter().sum::<f64>() / ind.len() as f64;
        for (&t, &y) in ind.t.iter().zip(&ind.y) {
            let r = y - prior.get(0).eval(t);
            sq += r * r;
            within += (y - mean) * (y - mean);
            count += 1;
        }
    }
    let grid = &data.grid.t;
    let span = (grid[grid.len() - 1] - grid[0]).max(1e-3);
    let l = span / 5.0;
    let v_gamma = (sq / count as f64).sqrt().max(1e-3);
    let v_theta = (within / count as f64).sqrt().max(1e-3);
    let sigma2 = (0.05 * v_theta * v_theta).max(1e-4);
    HyperParams::uniform(
        regime,
        data.m(),
        k,
        KernelParams::new(v_gamma, l),
        KernelParams::new(v_theta, l),
        NoiseParam::new(sigma2),
    )
}
