//! Covariance kernels and covariance-matrix construction.
//!
//! Hyper-parameters live in log space so that any real vector is a valid
//! parameter. The diagonal jitter used to keep matrices factorable is treated
//! as part of the kernel's scaled part: it is proportional to `v²`, which keeps
//! the covariance an exact differentiable function of the log parameters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{factor_with_jitter, CholFactor};

/// Default jitter, relative to the kernel variance `v²`.
pub const DEFAULT_REL_JITTER: f64 = 1e-8;

/// Kernel hyper-parameters `{v, ℓ}` stored as logarithms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub log_v: f64,
    pub log_l: f64,
}

impl KernelParams {
    pub fn new(v: f64, l: f64) -> Self {
        assert!(v > 0.0 && l > 0.0, "kernel parameters must be positive");
        KernelParams { log_v: v.ln(), log_l: l.ln() }
    }

    pub fn from_log(log_v: f64, log_l: f64) -> Self {
        KernelParams { log_v, log_l }
    }

    pub fn v(&self) -> f64 {
        self.log_v.exp()
    }

    pub fn l(&self) -> f64 {
        self.log_l.exp()
    }

    /// The kernel variance `v²`.
    pub fn variance(&self) -> f64 {
        (2.0 * self.log_v).exp()
    }
}

/// Noise variance `σ²` stored as its logarithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParam {
    pub log_sigma2: f64,
}

impl NoiseParam {
    pub fn new(sigma2: f64) -> Self {
        assert!(sigma2 > 0.0, "noise variance must be positive");
        NoiseParam { log_sigma2: sigma2.ln() }
    }

    pub fn from_log(log_sigma2: f64) -> Self {
        NoiseParam { log_sigma2 }
    }

    pub fn sigma2(&self) -> f64 {
        self.log_sigma2.exp()
    }
}

/// A stationary kernel with two log-space hyper-parameters.
pub trait Kernel: Send + Sync {
    fn eval(&self, x: f64, x2: f64, p: &KernelParams) -> f64;

    /// Value and derivatives with respect to `(log_v, log_l)`.
    fn eval_with_grad(&self, x: f64, x2: f64, p: &KernelParams) -> (f64, [f64; 2]);

    /// `k(x, x)`, the value jitter is scaled against.
    fn diag(&self, p: &KernelParams) -> f64;
}

/// The exponentiated quadratic kernel `v² exp(−(x−x')² / 2ℓ²)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExpQuad;

impl Kernel for ExpQuad {
    fn eval(&self, x: f64, x2: f64, p: &KernelParams) -> f64 {
        eq_kernel(x, x2, p)
    }

    fn eval_with_grad(&self, x: f64, x2: f64, p: &KernelParams) -> (f64, [f64; 2]) {
        let d = x - x2;
        let r2 = d * d * (-2.0 * p.log_l).exp();
        let k = (2.0 * p.log_v - 0.5 * r2).exp();
        (k, [2.0 * k, k * r2])
    }

    fn diag(&self, p: &KernelParams) -> f64 {
        p.variance()
    }
}

pub fn eq_kernel(x: f64, x2: f64, p: &KernelParams) -> f64 {
    let d = x - x2;
    (2.0 * p.log_v - 0.5 * d * d * (-2.0 * p.log_l).exp()).exp()
}

/// A covariance matrix on a grid, together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct CovMatrix {
    pub grid: Vec<f64>,
    pub values: DMatrix<f64>,
    /// Diagonal jitter actually added (after any escalation).
    pub jitter: f64,
    chol: CholFactor,
}

impl CovMatrix {
    pub fn chol(&self) -> &CholFactor {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// Wraps an arbitrary symmetric matrix, escalating jitter if needed.
    pub fn from_matrix(grid: Vec<f64>, values: DMatrix<f64>, jitter: f64, context: &str) -> Result<Self> {
        let (chol, values, jitter) = factor_with_jitter(&values, jitter, context)?;
        Ok(CovMatrix { grid, values, jitter, chol })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("grid contains non-finite timestamps"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid must be strictly increasing"));
    }
    Ok(())
}

/// Kernel matrix on `grid` without noise or jitter.
pub fn kernel_matrix<K: Kernel>(kernel: &K, grid: &[f64], p: &KernelParams) -> DMatrix<f64> {
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let v = kernel.eval(grid[a], grid[b], p);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

pub fn build_cov_with<K: Kernel>(
    kernel: &K,
    grid: &[f64],
    p: &KernelParams,
    noise: Option<&NoiseParam>,
    jitter: f64,
) -> Result<CovMatrix> {
    check_grid(grid)?;
    let mut m = kernel_matrix(kernel, grid, p);
    if let Some(n) = noise {
        let s2 = n.sigma2();
        for a in 0..grid.len() {
            m[(a, a)] += s2;
        }
    }
    CovMatrix::from_matrix(grid.to_vec(), m, jitter, "kernel covariance")
}

/// Exponentiated-quadratic covariance on `grid`: entries `k(t_a, t_b)` plus
/// `σ² + jitter` on the diagonal.
pub fn build_cov(grid: &[f64], p: &KernelParams, noise: Option<&NoiseParam>, jitter: f64) -> Result<CovMatrix> {
    build_cov_with(&ExpQuad, grid, p, noise, jitter)
}

/// The jitter the model uses for a kernel with parameters `p`.
pub fn model_jitter(p: &KernelParams, rel_jitter: f64) -> f64 {
    rel_jitter * ExpQuad.diag(p)
}

/// Covariance as used throughout the model: EQ kernel with relative jitter.
pub fn model_cov(grid: &[f64], p: &KernelParams, noise: Option<&NoiseParam>, rel_jitter: f64) -> Result<CovMatrix> {
    build_cov(grid, p, noise, model_jitter(p, rel_jitter))
}

pub fn cov_gradients_with<K: Kernel>(
    kernel: &K,
    grid: &[f64],
    p: &KernelParams,
    noise: Option<&NoiseParam>,
    jitter: f64,
) -> Vec<DMatrix<f64>> {
    let n = grid.len();
    let mut dv = DMatrix::zeros(n, n);
    let mut dl = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let (_, g) = kernel.eval_with_grad(grid[a], grid[b], p);
            dv[(a, b)] = g[0];
            dv[(b, a)] = g[0];
            dl[(a, b)] = g[1];
            dl[(b, a)] = g[1];
        }
    }
    // jitter scales with v², so it follows the log_v derivative
    for a in 0..n {
        dv[(a, a)] += 2.0 * jitter;
    }
    let mut out = vec![dv, dl];
    if let Some(s) = noise {
        out.push(DMatrix::from_diagonal_element(n, n, s.sigma2()));
    }
    out
}

/// Derivatives of the covariance with respect to `log v`, `log ℓ` and, when
/// noise is present, `log σ²`. `jitter` is the absolute diagonal jitter of
/// the matrix being differentiated; it is treated as proportional to `v²`.
pub fn cov_gradients(grid: &[f64], p: &KernelParams, noise: Option<&NoiseParam>, jitter: f64) -> Vec<DMatrix<f64>> {
    cov_gradients_with(&ExpQuad, grid, p, noise, jitter)
}
