//! Gini index and Lorenz curve of an attention distribution.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

fn sorted_checked(counts: &[f64]) -> Result<(Vec<f64>, f64)> {
    if counts.is_empty() {
        return Err(Error::UndefinedInput("empty attention vector".into()));
    }
    if let Some(bad) = counts.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(invalid!("attention counts must be finite and non-negative, got {bad}"));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedInput("all attention counts are zero".into()));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted, total))
}

/// Gini index of non-negative counts:
/// `sum_i sum_j |x_i - x_j| / (2 n^2 mean)`, evaluated through the sorted
/// form `sum_i (2i - n - 1) x_(i) / (n sum x)` in O(n log n).
pub fn gini(counts: &[f64]) -> Result<f64> {
    let (sorted, total) = sorted_checked(counts)?;
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x)
        .sum();
    Ok((weighted / (n * total)).max(0.0))
}

/// Lorenz curve points `(population share, attention share)` from `(0, 0)`
/// to `(1, 1)`, outlets sorted by ascending attention.
pub fn lorenz(counts: &[f64]) -> Result<Vec<(f64, f64)>> {
    let (sorted, total) = sorted_checked(counts)?;
    let n = sorted.len();
    let mut points = Vec::with_capacity(n + 1);
    points.push((0.0, 0.0));
    let mut cumulative = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        cumulative += x;
        let share = if i + 1 == n { 1.0 } else { cumulative / total };
        points.push(((i + 1) as f64 / n as f64, share));
    }
    Ok(points)
}

/// Trapezoidal area under a piecewise-linear curve.
pub fn area_under(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}
