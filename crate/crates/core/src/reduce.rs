//! Order-fixed reductions.
//!
//! Floating-point addition is not associative, so sums that feed reported
//! statistics are evaluated on a fixed binary tree over the input order.
//! The result depends only on the input slice, never on scheduling.

const LEAF: usize = 32;

/// Pairwise (cascade) sum with a fixed split rule.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and sample standard deviation, both from pairwise sums. The mean is
/// accumulated relative to the first sample, so constant input returns that
/// constant exactly.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let pivot = values[0];
    let shifted: Vec<f64> = values.iter().map(|v| v - pivot).collect();
    let mean = pivot + pairwise_sum(&shifted) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (pairwise_sum(&sq) / (n - 1) as f64).sqrt())
}
