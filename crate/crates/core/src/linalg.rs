//! Dense linear-algebra primitives shared by the training and prediction code.
//!
//! Every inverse that appears in the model is realised through a Cholesky
//! factor: solves, log-determinants and quadratic forms all go through
//! [`CholFactor`].

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Number of ×10 jitter escalations attempted before giving up.
pub const MAX_JITTER_ESCALATIONS: usize = 5;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct CholFactor {
    inner: Cholesky<f64, Dyn>,
}

impl CholFactor {
    /// Factorizes `a`, reading only its lower triangle. Returns `None` when `a`
    /// is not numerically positive definite.
    pub fn new(a: DMatrix<f64>) -> Option<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Cholesky::new(a).map(|inner| CholFactor { inner })
    }

    pub fn dim(&self) -> usize {
        self.inner.l_dirty().nrows()
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.inner.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.inner.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.inner.solve(b)
    }

    /// `L⁻¹ b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let l = self.inner.l_dirty();
        let mut x = b.clone();
        solve_lower_in_place(l, x.as_mut_slice());
        x
    }

    /// `L⁻¹ B` column by column.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let l = self.inner.l_dirty();
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            solve_lower_in_place(l, col.as_mut_slice());
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.inner.inverse();
        symmetrize(&mut inv);
        inv
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.inner.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `vᵀ A⁻¹ v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        self.solve_lower(v).norm_squared()
    }
}

fn solve_lower_in_place(l: &DMatrix<f64>, x: &mut [f64]) {
    let n = x.len();
    for j in 0..n {
        let xj = x[j] / l[(j, j)];
        x[j] = xj;
        for i in (j + 1)..n {
            x[i] -= l[(i, j)] * xj;
        }
    }
}

/// Factorizes `a + j·I`, starting from `jitter` and multiplying by ten on each
/// failure, at most [`MAX_JITTER_ESCALATIONS`] times. Returns the factor, the
/// jittered matrix and the jitter that was finally applied.
pub fn factor_with_jitter(
    a: &DMatrix<f64>,
    jitter: f64,
    context: &str,
) -> Result<(CholFactor, DMatrix<f64>, f64)> {
    let n = a.nrows();
    let mean_diag = if n == 0 { 0.0 } else { a.trace() / n as f64 };
    let mut j = jitter.max(0.0);
    for attempt in 0..=MAX_JITTER_ESCALATIONS {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += j;
        }
        if let Some(f) = CholFactor::new(m.clone()) {
            return Ok((f, m, j));
        }
        if attempt == MAX_JITTER_ESCALATIONS {
            break;
        }
        j = if j > 0.0 { 10.0 * j } else { 1e-12 * mean_diag.abs().max(f64::MIN_POSITIVE) };
    }
    Err(Error::NonPositiveDefinite { context: context.to_string(), jitter: j })
}

/// Copies the average of the two triangles into both, so that the matrix is
/// exactly symmetric.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// `tr(A B)` for symmetric `B`, in O(n²).
pub fn trace_product_sym(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Exact multivariate normal log-density `log N(x; mean, Σ)` given the
/// factor of Σ.
pub fn gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, chol: &CholFactor) -> Result<f64> {
    let n = x.len();
    if mean.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: mean.len() });
    }
    if chol.dim() != n {
        return Err(Error::LengthMismatch { expected: n, found: chol.dim() });
    }
    let r = x - mean;
    Ok(-0.5 * (n as f64 * LN_2PI + chol.log_det() + chol.quad_form(&r)))
}

/// `E[(X − b)ᵀ S⁻¹ (X − b)]` for `X ~ N(mean, cov)`:
/// `(mean − b)ᵀ S⁻¹ (mean − b) + tr(cov S⁻¹)`.
pub fn expected_quadratic(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    b: &DVector<f64>,
    s: &CholFactor,
) -> Result<f64> {
    let n = mean.len();
    if b.len() != n {
        return Err(Error::LengthMismatch { expected: n, found: b.len() });
    }
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::LengthMismatch { expected: n, found: cov.nrows() });
    }
    if s.dim() != n {
        return Err(Error::LengthMismatch { expected: n, found: s.dim() });
    }
    let r = mean - b;
    // tr(cov S⁻¹) = tr(L⁻¹ cov L⁻ᵀ)
    let a = s.solve_lower_mat(cov);
    let c = s.solve_lower_mat(&a.transpose());
    Ok(s.quad_form(&r) + c.trace())
}

/// Shift-stable `log Σ exp(v_a)`. Entries equal to `-inf` contribute nothing;
/// an all `-inf` input yields `-inf`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights onto the simplex in log space.
pub fn normalize_log_weights(logw: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logw);
    logw.iter().map(|l| (l - lse).exp()).collect()
}

/// Rows/columns `idx` of `a` as a dense sub-matrix.
pub fn sub_matrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

pub fn sub_matrix_rect(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
}

pub fn sub_vector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}
