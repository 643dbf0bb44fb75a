//! Synthetic data generators.
//!
//! [`simulate_main`] draws data from the model itself: linear prior means,
//! GP mean processes per cluster and GP individual deviations around them.
//! [`simulate_scheme_a`] produces piecewise-linear bump curves that are not
//! tailored to the model.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Individual};
use crate::error::{Error, Result};
use crate::kernel::{model_cov, KernelParams, NoiseParam, DEFAULT_REL_JITTER};
use crate::vem::{HyperParams, HypothesisRegime};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Training individuals.
    pub m: usize,
    /// Extra individuals drawn from the same clusters and returned apart from
    /// the training set.
    pub n_new: usize,
    pub k: usize,
    /// Size of the candidate grid.
    pub n_pool: usize,
    /// Observations per individual, a random subset of the candidate grid.
    pub n_i: usize,
    pub regime: HypothesisRegime,
    pub t_range: (f64, f64),
    /// Slope and intercept ranges of the linear prior means.
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    /// Ranges of `log v` and `log ℓ` for both mean and individual kernels.
    /// The default `log v ∈ [0, 1.5]` draws the kernel variance `v²`
    /// log-uniformly in `[1, e³]`.
    pub log_v_range: (f64, f64),
    pub log_l_range: (f64, f64),
    pub sigma2_range: (f64, f64),
    /// Observe every individual on the whole candidate grid (`n_i` ignored).
    pub common_grid: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            m: 50,
            n_new: 0,
            k: 3,
            n_pool: 200,
            n_i: 30,
            regime: HypothesisRegime::H00,
            t_range: (0.0, 10.0),
            a_range: (-2.0, 2.0),
            b_range: (20.0, 30.0),
            log_v_range: (0.0, 1.5),
            log_l_range: (0.0, 1.0),
            sigma2_range: (0.0, 0.1),
            common_grid: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 || self.n_pool == 0 {
            return Err(Error::invalid("k, m and n_pool must be positive"));
        }
        if !self.common_grid && (self.n_i == 0 || self.n_i > self.n_pool) {
            return Err(Error::invalid(format!("n_i must lie in 1..={}", self.n_pool)));
        }
        let ranges = [self.t_range, self.a_range, self.b_range, self.log_v_range, self.log_l_range, self.sigma2_range];
        if ranges.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::invalid("every range must be finite with lo ≤ hi"));
        }
        if self.t_range.0 == self.t_range.1 {
            return Err(Error::invalid("t_range must have positive width"));
        }
        Ok(())
    }
}

/// Ground truth behind a simulated data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// Cluster of every training individual.
    pub labels: Vec<usize>,
    /// Cluster of every held-out individual.
    pub new_labels: Vec<usize>,
    pub grid: Vec<f64>,
    /// Mean-process draws on `grid`, one per cluster (empty for Scheme A).
    pub mean_curves: Vec<Vec<f64>>,
    /// `(a, b)` of each linear prior mean.
    pub prior_lines: Vec<(f64, f64)>,
    /// Hyper-parameters used, with `π` uniform.
    pub hp: Option<HyperParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub data: Dataset,
    pub new_individuals: Vec<Individual>,
    pub truth: SimTruth,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn draw_kernel(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> KernelParams {
    let log_v = uniform(rng, cfg.log_v_range);
    let log_l = uniform(rng, cfg.log_l_range);
    KernelParams::from_log(log_v, log_l)
}

fn draw_noise(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> NoiseParam {
    // a zero variance would make log σ² infinite
    NoiseParam::new(uniform(rng, cfg.sigma2_range).max(1e-8))
}

/// One draw of `N(mean, cov)` through the jittered Cholesky factor.
fn gaussian_draw(rng: &mut ChaCha8Rng, mean: &DVector<f64>, l: &nalgebra::DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| StandardNormal.sample(rng)));
    mean + l * z
}

/// Draws a data set from the generative model.
pub fn simulate_main(cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grid: Vec<f64> = (0..cfg.n_pool).map(|_| uniform(&mut rng, cfg.t_range)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let prior_lines: Vec<(f64, f64)> =
        (0..cfg.k).map(|_| (uniform(&mut rng, cfg.a_range), uniform(&mut rng, cfg.b_range))).collect();
    let gamma: Vec<KernelParams> = (0..cfg.regime.n_gamma_sets(cfg.k)).map(|_| draw_kernel(&mut rng, cfg)).collect();
    let mut mean_curves = Vec::with_capacity(cfg.k);
    for (k, &(a, b)) in prior_lines.iter().enumerate() {
        let g = if gamma.len() == 1 { &gamma[0] } else { &gamma[k] };
        let c = model_cov(&grid, g, None, DEFAULT_REL_JITTER)?;
        let m = DVector::from_iterator(grid.len(), grid.iter().map(|t| a * t + b));
        mean_curves.push(gaussian_draw(&mut rng, &m, &c.chol().l()).iter().copied().collect::<Vec<f64>>());
    }

    let total = cfg.m + cfg.n_new;
    let n_theta = cfg.regime.n_theta_sets(total);
    let mut theta = Vec::with_capacity(n_theta);
    let mut noise = Vec::with_capacity(n_theta);
    for _ in 0..n_theta {
        theta.push(draw_kernel(&mut rng, cfg));
        noise.push(draw_noise(&mut rng, cfg));
    }

    let mut individuals = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let z = rng.random_range(0..cfg.k);
        let mut pos: Vec<usize> = if cfg.common_grid || cfg.n_i >= grid.len() {
            (0..grid.len()).collect()
        } else {
            sample(&mut rng, grid.len(), cfg.n_i).into_vec()
        };
        pos.sort_unstable();
        let t: Vec<f64> = pos.iter().map(|&p| grid[p]).collect();
        let (th, s2) = if n_theta == 1 { (&theta[0], &noise[0]) } else { (&theta[i], &noise[i]) };
        let psi = model_cov(&t, th, Some(s2), DEFAULT_REL_JITTER)?;
        let mu = DVector::from_iterator(t.len(), pos.iter().map(|&p| mean_curves[z][p]));
        let y = gaussian_draw(&mut rng, &mu, &psi.chol().l());
        let name = if i < cfg.m { format!("ind{i:03}") } else { format!("new{:03}", i - cfg.m) };
        individuals.push(Individual::new(name, t, y.iter().copied().collect())?);
        labels.push(z);
    }
    let new_individuals = individuals.split_off(cfg.m);
    let new_labels = labels.split_off(cfg.m);
    let hp = HyperParams { gamma, theta, noise, pi: vec![1.0 / cfg.k as f64; cfg.k] };
    Ok(Simulation {
        data: Dataset::new(individuals)?,
        new_individuals,
        truth: SimTruth { labels, new_labels, grid, mean_curves, prior_lines, hp: Some(hp) },
    })
}

/// Bump curves `U + c(1 − U)(2.5 − |t − d|)⁺ + ε` on a common grid of `n`
/// points over `[0, 10]`, with `(c, d)` ∈ {0.5, 1} × {2.5, 7.5} giving the
/// four clusters, `U ~ U[0, 1]` per curve and `ε ~ N(0, 0.05)` per point
/// (0.05 is the variance).
pub fn simulate_scheme_a(seed: u64, m: usize, n: usize) -> Result<Simulation> {
    simulate_scheme_a_with_new(seed, m, n, 0)
}

pub fn simulate_scheme_a_with_new(seed: u64, m: usize, n: usize, n_new: usize) -> Result<Simulation> {
    if m == 0 || n < 2 {
        return Err(Error::invalid("scheme A needs m ≥ 1 and n ≥ 2"));
    }
    const SHAPES: [(f64, f64); 4] = [(0.5, 2.5), (0.5, 7.5), (1.0, 2.5), (1.0, 7.5)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: Vec<f64> = (0..n).map(|j| 10.0 * j as f64 / (n - 1) as f64).collect();
    let unit = Uniform::new(0.0, 1.0).expect("valid range");
    let sd = 0.05f64.sqrt();
    let mut individuals = Vec::with_capacity(m + n_new);
    let mut labels = Vec::with_capacity(m + n_new);
    for i in 0..m + n_new {
        let z = rng.random_range(0..4);
        let (c, d) = SHAPES[z];
        let u: f64 = unit.sample(&mut rng);
        let y = t
            .iter()
            .map(|&x| {
                let eps: f64 = StandardNormal.sample(&mut rng);
                u + c * (1.0 - u) * (2.5 - (x - d).abs()).max(0.0) + sd * eps
            })
            .collect();
        let name = if i < m { format!("ind{i:03}") } else { format!("new{:03}", i - m) };
        individuals.push(Individual::new(name, t.clone(), y)?);
        labels.push(z);
    }
    let new_individuals = individuals.split_off(m);
    let new_labels = labels.split_off(m);
    Ok(Simulation {
        data: Dataset::new(individuals)?,
        new_individuals,
        truth: SimTruth { labels, new_labels, grid: t, mean_curves: Vec::new(), prior_lines: Vec::new(), hp: None },
    })
}

/// Chronological split: the first `n_obs` points are observed, the rest are
/// held out.
pub fn split_new_individual(ind: &Individual, n_obs: usize) -> Result<(Individual, Individual)> {
    if n_obs == 0 || n_obs >= ind.len() {
        return Err(Error::invalid(format!("n_obs must lie in 1..{} for `{}`", ind.len(), ind.id)));
    }
    let obs = Individual { id: ind.id.clone(), t: ind.t[..n_obs].to_vec(), y: ind.y[..n_obs].to_vec() };
    let test = Individual { id: ind.id.clone(), t: ind.t[n_obs..].to_vec(), y: ind.y[n_obs..].to_vec() };
    Ok((obs, test))
}
