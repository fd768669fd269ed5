//! Descriptive statistics for score distributions.
//!
//! Quartiles use linear interpolation between closest ranks: the `p`-quantile
//! of sorted values `x[0..n]` sits at position `h = (n - 1) p`, and the result
//! is `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`. `sigma` is
//! the population standard deviation (divisor `n`).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub sigma: f64,
    pub min: f64,
    pub max: f64,
}

/// Quantile of already sorted values by linear interpolation.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Summarize a non-empty distribution; `None` when `values` is empty.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (m, var) = if sorted[0] == sorted[sorted.len() - 1] {
        (sorted[0], 0.0)
    } else {
        let m = mean(values);
        (m, values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64)
    };
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    Some(Summary {
        n: values.len(),
        mean: m,
        median: quantile_sorted(&sorted, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        sigma: var.sqrt(),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    })
}
