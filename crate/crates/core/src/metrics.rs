//! Clustering and prediction quality measures.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};
use crate::predict::MixturePrediction;

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index between two partitions given as label vectors.
///
/// When the expected and maximal indices coincide (both partitions trivial)
/// the value is 1 for identical partitions and 0 otherwise.
pub fn ari<A: Eq + Hash, B: Eq + Hash>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), found: b.len() });
    }
    let mut table: HashMap<(&A, &B), usize> = HashMap::new();
    let mut rows: HashMap<&A, usize> = HashMap::new();
    let mut cols: HashMap<&B, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| choose2(n)).sum();
    let total = choose2(a.len());
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        let same = table.len() == rows.len() && table.len() == cols.len();
        return Ok(if same { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::invalid("mse of empty vectors"));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Weighted 95% coverage, in percent: for every held-out point, the
/// `τ_*`-weighted share of clusters whose pointwise interval contains it.
pub fn wcic95(pred: &MixturePrediction, t: &[f64], y: &[f64]) -> Result<f64> {
    if t.len() != y.len() {
        return Err(Error::LengthMismatch { expected: t.len(), found: y.len() });
    }
    if t.is_empty() {
        return Err(Error::invalid("wcic95 needs at least one held-out point"));
    }
    let intervals: Vec<Vec<(f64, f64)>> = pred.clusters.iter().map(|c| c.interval95()).collect();
    let mut acc = 0.0;
    for (&ti, &yi) in t.iter().zip(y) {
        let j = pred
            .t
            .iter()
            .position(|&s| (s - ti).abs() <= 1e-9)
            .ok_or(Error::UnresolvedTimestamp { id: "prediction".into(), t: ti })?;
        for (w, iv) in pred.weights.iter().zip(&intervals) {
            let (lo, hi) = iv[j];
            if yi >= lo && yi <= hi {
                acc += w;
            }
        }
    }
    Ok(100.0 * acc / t.len() as f64)
}
