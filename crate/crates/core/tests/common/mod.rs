//! Dense reference implementations shared by the integration tests.
//!
//! Everything here uses explicit inverses and determinants of fully padded
//! matrices, so it shares no numerical path with the library.
#![allow(dead_code)]

use magmaclust::vem::{ClusterMeanPosterior, MeanProcessPosterior};
use magmaclust::{Dataset, HyperParams, HypothesisRegime, Individual, KernelParams, NoiseParam, Responsibilities};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const REL_JITTER: f64 = 1e-8;
const LN_2PI: f64 = 1.8378770664093453;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn eq(x: f64, y: f64, p: &KernelParams) -> f64 {
    let v2 = p.log_v.exp().powi(2);
    let l = p.log_l.exp();
    v2 * (-(x - y).powi(2) / (2.0 * l * l)).exp()
}

/// Kernel matrix plus `σ²` and the relative jitter `1e-8·v²` on the diagonal.
pub fn dense_cov(t: &[f64], p: &KernelParams, noise: Option<&NoiseParam>) -> DMatrix<f64> {
    let n = t.len();
    let v2 = p.log_v.exp().powi(2);
    DMatrix::from_fn(n, n, |a, b| {
        let mut x = eq(t[a], t[b], p);
        if a == b {
            x += REL_JITTER * v2 + noise.map_or(0.0, |s| s.log_sigma2.exp());
        }
        x
    })
}

pub fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible test matrix")
}

pub fn logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let r = x - mean;
    let n = x.len() as f64;
    -0.5 * (n * LN_2PI + cov.determinant().ln() + (r.transpose() * inv(cov) * &r)[(0, 0)])
}

pub fn positions(t: &[f64], grid: &[f64]) -> Vec<usize> {
    t.iter().map(|x| grid.iter().position(|g| (g - x).abs() < 1e-12).expect("on grid")).collect()
}

pub fn sub(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

pub fn subv(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// `Ψ̃⁻¹` and `Ψ̃⁻¹ ỹ` as literal `N×N` / `N` arrays with zeros outside the
/// observed block.
pub fn padded(ind: &Individual, grid: &[f64], theta: &KernelParams, noise: &NoiseParam) -> (DMatrix<f64>, DVector<f64>) {
    let n = grid.len();
    let idx = positions(&ind.t, grid);
    let pinv = inv(&dense_cov(&ind.t, theta, Some(noise)));
    let piy = &pinv * DVector::from_column_slice(&ind.y);
    let mut big = DMatrix::zeros(n, n);
    let mut h = DVector::zeros(n);
    for (a, &ia) in idx.iter().enumerate() {
        h[ia] = piy[a];
        for (b, &ib) in idx.iter().enumerate() {
            big[(ia, ib)] = pinv[(a, b)];
        }
    }
    (big, h)
}

/// `Ĉ = (C⁻¹ + Σ τ Ψ̃⁻¹)⁻¹`, `m̂ = Ĉ (C⁻¹ m + Σ τ Ψ̃⁻¹ ỹ)` on `grid`.
pub fn dense_posterior(
    inds: &[Individual],
    grid: &[f64],
    hp: &HyperParams,
    weights: &[f64],
    k: usize,
    prior_mean: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let cinv = inv(&dense_cov(grid, hp.gamma_for(k), None));
    let mut prec = cinv.clone();
    let mut h = &cinv * prior_mean;
    for (i, ind) in inds.iter().enumerate() {
        let (p, hi) = padded(ind, grid, hp.theta_for(i), hp.noise_for(i));
        prec += p * weights[i];
        h += hi * weights[i];
    }
    let c_hat = inv(&prec);
    let m_hat = &c_hat * h;
    (m_hat, c_hat)
}

/// Responsibilities straight from the formula, normalised after subtracting
/// the largest log-weight.
pub fn dense_tau(data: &Dataset, hp: &HyperParams, mp: &MeanProcessPosterior) -> DMatrix<f64> {
    let (m, k) = (data.m(), hp.k());
    let mut out = DMatrix::zeros(m, k);
    for (i, ind) in data.individuals.iter().enumerate() {
        let idx = positions(&ind.t, &mp.grid);
        let psi = dense_cov(&ind.t, hp.theta_for(i), Some(hp.noise_for(i)));
        let psi_inv = inv(&psi);
        let y = DVector::from_column_slice(&ind.y);
        let logw: Vec<f64> = (0..k)
            .map(|c| {
                let cl = &mp.clusters[c];
                let tr = (&psi_inv * sub(&cl.cov, &idx, &idx)).trace();
                hp.pi[c].ln() + logpdf(&y, &subv(&cl.mean, &idx), &psi) - 0.5 * tr
            })
            .collect();
        let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        for c in 0..k {
            out[(i, c)] = w[c] / s;
        }
    }
    out
}

/// ELBO with explicit inverses, per-cluster constant `½N(log 2π + 1)`.
pub fn dense_elbo(data: &Dataset, hp: &HyperParams, tau: &DMatrix<f64>, mp: &MeanProcessPosterior) -> f64 {
    let grid = &mp.grid;
    let n = grid.len() as f64;
    let mut total = 0.0;
    for (i, ind) in data.individuals.iter().enumerate() {
        let idx = positions(&ind.t, grid);
        let psi = dense_cov(&ind.t, hp.theta_for(i), Some(hp.noise_for(i)));
        let psi_inv = inv(&psi);
        let y = DVector::from_column_slice(&ind.y);
        for (k, cl) in mp.clusters.iter().enumerate() {
            let w = tau[(i, k)];
            if w == 0.0 {
                continue;
            }
            let tr = (&psi_inv * sub(&cl.cov, &idx, &idx)).trace();
            total += w * (logpdf(&y, &subv(&cl.mean, &idx), &psi) - 0.5 * tr + (hp.pi[k] / w).ln());
        }
    }
    for (k, cl) in mp.clusters.iter().enumerate() {
        let c = dense_cov(grid, hp.gamma_for(k), None);
        total += logpdf(&cl.mean, &cl.prior_mean, &c) - 0.5 * (inv(&c) * &cl.cov).trace()
            + 0.5 * cl.cov.determinant().ln()
            + 0.5 * n * (LN_2PI + 1.0);
    }
    total
}

/// Joint-Gaussian conditioning of `N(mean, cov)` on the entries `obs`.
pub fn dense_condition(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    pred: &[usize],
    obs: &[usize],
    y: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let y = DVector::from_column_slice(y);
    let soo_inv = inv(&sub(cov, obs, obs));
    let spo = sub(cov, pred, obs);
    let mu = subv(mean, pred) + &spo * &soo_inv * (y - subv(mean, obs));
    let s = sub(cov, pred, pred) - &spo * soo_inv * spo.transpose();
    (mu, s)
}

/// Sorted distinct timestamps, at least `gap` apart, drawn from `[0, span]`.
/// `n` sorted timestamps in `[0, span)`, consecutive ones at least `gap` apart.
pub fn spread_times(rng: &mut ChaCha8Rng, n: usize, span: f64, gap: f64) -> Vec<f64> {
    let slot = span / n as f64;
    assert!(gap < slot, "cannot fit {n} points {gap} apart in {span}");
    (0..n).map(|j| j as f64 * slot + rng.random_range(0.0..slot - gap)).collect()
}

pub fn random_kernel(rng: &mut ChaCha8Rng) -> KernelParams {
    KernelParams::from_log(rng.random_range(-0.5..0.7), rng.random_range(-0.3..0.5))
}

pub fn random_noise(rng: &mut ChaCha8Rng) -> NoiseParam {
    NoiseParam::from_log(rng.random_range(-3.0..-0.5))
}

pub fn random_hp(rng: &mut ChaCha8Rng, regime: HypothesisRegime, m: usize, k: usize) -> HyperParams {
    let nt = regime.n_theta_sets(m);
    let mut pi: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    HyperParams {
        gamma: (0..regime.n_gamma_sets(k)).map(|_| random_kernel(rng)).collect(),
        theta: (0..nt).map(|_| random_kernel(rng)).collect(),
        noise: (0..nt).map(|_| random_noise(rng)).collect(),
        pi,
    }
}

pub fn random_tau(rng: &mut ChaCha8Rng, m: usize, k: usize) -> Responsibilities {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let r: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = r.iter().sum();
            r.iter().map(|x| x / s).collect()
        })
        .collect();
    Responsibilities::from_rows(&rows).unwrap()
}

/// `m` individuals observed at random subsets of `pool`.
pub fn random_dataset(rng: &mut ChaCha8Rng, m: usize, pool: &[f64], min_obs: usize) -> Dataset {
    let inds = (0..m)
        .map(|i| {
            let n_i = rng.random_range(min_obs..=pool.len());
            let mut idx: Vec<usize> = rand::seq::index::sample(rng, pool.len(), n_i).into_vec();
            idx.sort_unstable();
            let t: Vec<f64> = idx.iter().map(|&j| pool[j]).collect();
            let y: Vec<f64> = t.iter().map(|x| x.sin() + rng.random_range(-1.0..1.0)).collect();
            Individual::new(format!("i{i}"), t, y).unwrap()
        })
        .collect();
    Dataset::new(inds).unwrap()
}

/// Random mean-process posterior with PSD covariances.
pub fn random_posterior(rng: &mut ChaCha8Rng, grid: &[f64], k: usize) -> MeanProcessPosterior {
    let n = grid.len();
    let clusters = (0..k)
        .map(|_| {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            let cov = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.01;
            let log_det = cov.determinant().ln();
            ClusterMeanPosterior {
                prior_mean: DVector::zeros(n),
                mean: DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
                cov,
                log_det,
            }
        })
        .collect();
    MeanProcessPosterior { grid: grid.to_vec(), clusters }
}

/// Central finite-difference gradient.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖∞ / ‖b‖∞`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// Largest deviation scaled by `max(1, |b|)` entrywise.
pub fn scaled_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
