//! Box-constrained limited-memory quasi-Newton ascent.
//!
//! A projected L-BFGS: variables sitting on a bound with the gradient pushing
//! outwards are frozen for the iteration, the two-loop recursion runs on the
//! free subspace, and an Armijo backtracking search is performed along the
//! projected path. Non-finite trial values are rejected like any failing step.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimConfig {
    pub max_iter: usize,
    /// Convergence threshold on the infinity norm of the projected gradient.
    pub grad_tol: f64,
    /// Relative change of the objective under which iterations stop.
    pub f_tol: f64,
    /// Number of curvature pairs kept.
    pub mem: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { max_iter: 50, grad_tol: 1e-6, f_tol: 1e-11, mem: 10 }
    }
}

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Longest first step (infinity norm) before any curvature is known.
const FIRST_STEP: f64 = 0.5;
const MIN_REL_STEP: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimStatus {
    Converged,
    MaxIter,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub status: OptimStatus,
    pub iterations: usize,
    /// Objective value after every accepted iteration, starting with `x0`.
    pub trace: Vec<f64>,
    /// Infinity norm of the projected gradient at `x`.
    pub proj_grad_norm: f64,
}

/// Per-parameter box `[lower, upper]`.
pub type Bounds = Vec<(f64, f64)>;

fn project(x: &mut [f64], bounds: Option<&Bounds>) {
    if let Some(b) = bounds {
        for (xi, &(lo, hi)) in x.iter_mut().zip(b) {
            *xi = xi.clamp(lo, hi);
        }
    }
}

/// Gradient of the minimization problem with components that would leave the
/// box zeroed out.
fn projected_descent_grad(x: &[f64], g: &[f64], bounds: Option<&Bounds>) -> Vec<f64> {
    let mut pg = g.to_vec();
    if let Some(b) = bounds {
        for j in 0..x.len() {
            let (lo, hi) = b[j];
            if (x[j] <= lo && g[j] > 0.0) || (x[j] >= hi && g[j] < 0.0) {
                pg[j] = 0.0;
            }
        }
    }
    pg
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Maximizes `objective`, which returns `(value, gradient)`.
pub fn maximize<F>(mut objective: F, x0: &[f64], bounds: Option<&Bounds>, cfg: &OptimConfig) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    if let Some(b) = bounds {
        if b.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: b.len() });
        }
    }
    // internally we minimize f = -objective
    let mut eval = |x: &[f64]| -> (f64, Vec<f64>) {
        let (v, g) = objective(x);
        debug_assert_eq!(g.len(), x.len());
        if v.is_finite() && g.iter().all(|gi| gi.is_finite()) {
            (-v, g.into_iter().map(|gi| -gi).collect())
        } else {
            (f64::INFINITY, vec![f64::NAN; x.len()])
        }
    };

    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let (mut f, mut g) = eval(&x);
    if !f.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut trace = vec![-f];
    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut status = OptimStatus::MaxIter;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let pg = projected_descent_grad(&x, &g, bounds);
        if inf_norm(&pg) < cfg.grad_tol {
            status = OptimStatus::Converged;
            break;
        }
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != 0.0 || *gi == 0.0).collect();

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                if s_hist.is_empty() {
                    break;
                }
                s_hist.clear();
                y_hist.clear();
            }
            let mut d = two_loop(&pg, &s_hist, &y_hist, &free);
            if dot(&d, &pg) >= 0.0 {
                d = pg.iter().map(|v| -v).collect();
            }
            let mut alpha = if s_hist.is_empty() { (FIRST_STEP / inf_norm(&d)).min(1.0) } else { 1.0 };
            let min_step = MIN_REL_STEP * (1.0 + inf_norm(&x));
            for _ in 0..MAX_BACKTRACKS {
                let mut xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
                project(&mut xt, bounds);
                let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                // below this the objective is dominated by rounding noise
                if inf_norm(&step) < min_step {
                    break;
                }
                let (ft, gt) = eval(&xt);
                if ft.is_finite() && ft <= f + ARMIJO_C * dot(&g, &step) {
                    accepted = Some((xt, ft, gt, step));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }

        let Some((xt, ft, gt, step)) = accepted else {
            status = OptimStatus::LineSearchFailed;
            break;
        };
        iterations += 1;
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &yv);
        if sy > 1e-12 * dot(&step, &step).sqrt() * dot(&yv, &yv).sqrt() && sy > 0.0 {
            if s_hist.len() == cfg.mem.max(1) {
                s_hist.pop_front();
                y_hist.pop_front();
            }
            s_hist.push_back(step);
            y_hist.push_back(yv);
        }
        let rel_change = (f - ft).abs() / f.abs().max(ft.abs()).max(1.0);
        x = xt;
        f = ft;
        g = gt;
        trace.push(-f);
        if rel_change < cfg.f_tol {
            status = OptimStatus::Converged;
            break;
        }
    }
    let proj_grad_norm = inf_norm(&projected_descent_grad(&x, &g, bounds));
    if status == OptimStatus::MaxIter && proj_grad_norm < cfg.grad_tol {
        status = OptimStatus::Converged;
    }
    Ok(OptimResult { x, value: -f, status, iterations, trace, proj_grad_norm })
}

/// L-BFGS two-loop recursion restricted to the free variables.
fn two_loop(g: &[f64], s_hist: &VecDeque<Vec<f64>>, y_hist: &VecDeque<Vec<f64>>, free: &[bool]) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(x, f)| if *f { *x } else { 0.0 }).collect() };
    let mut q = mask(g);
    let m = s_hist.len();
    let mut alphas = vec![0.0; m];
    let ss: Vec<Vec<f64>> = s_hist.iter().map(|s| mask(s)).collect();
    let ys: Vec<Vec<f64>> = y_hist.iter().map(|y| mask(y)).collect();
    let rho: Vec<f64> = ss.iter().zip(&ys).map(|(s, y)| 1.0 / dot(s, y)).collect();
    for k in (0..m).rev() {
        if !rho[k].is_finite() || rho[k] <= 0.0 {
            continue;
        }
        alphas[k] = rho[k] * dot(&ss[k], &q);
        for (qi, yi) in q.iter_mut().zip(&ys[k]) {
            *qi -= alphas[k] * yi;
        }
    }
    let gamma = (0..m)
        .rev()
        .find(|&k| rho[k].is_finite() && rho[k] > 0.0)
        .map(|k| dot(&ss[k], &ys[k]) / dot(&ys[k], &ys[k]))
        .unwrap_or(1.0);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for k in 0..m {
        if !rho[k].is_finite() || rho[k] <= 0.0 {
            continue;
        }
        let beta = rho[k] * dot(&ys[k], &q);
        for (qi, si) in q.iter_mut().zip(&ss[k]) {
            *qi += (alphas[k] - beta) * si;
        }
    }
    mask(&q).into_iter().map(|v| -v).collect()
}
