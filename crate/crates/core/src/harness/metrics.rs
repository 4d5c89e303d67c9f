use serde::Serialize;

use crate::error::{Error, Result};

/// Upper edges of the default complexity bins; the last bin is open.
pub const DEFAULT_BIN_EDGES: [f64; 6] = [0.0, 3.0, 6.0, 9.0, 12.0, 15.0];

/// Coefficient of determination, `1 - SS_res / SS_tot`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Empty("y_true"));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantTarget);
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mean_squared_error(y_true: &[f64], y_pred: &[f64]) -> f64 {
    let n = y_true.len().min(y_pred.len());
    if n == 0 {
        return f64::NAN;
    }
    y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p) * (y - p))
        .sum::<f64>()
        / n as f64
}

/// Percentage of `true` outcomes, or `None` for no outcomes.
pub fn solution_rate<I: IntoIterator<Item = bool>>(outcomes: I) -> Option<f64> {
    let (hits, total) = outcomes
        .into_iter()
        .fold((0usize, 0usize), |(h, t), ok| (h + usize::from(ok), t + 1));
    (total > 0).then(|| hits as f64 / total as f64 * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateStats {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

/// Spread of per-trial rates. The median of an even count is the mean of
/// the two middle values.
pub fn rate_stats(rates: &[f64]) -> Option<RateStats> {
    if rates.is_empty() {
        return None;
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Some(RateStats {
        min: sorted[0],
        median,
        mean: sorted.iter().sum::<f64>() / n as f64,
        max: sorted[n - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityBin {
    /// Exclusive lower edge.
    pub lo: f64,
    /// Inclusive upper edge; `None` for the open last bin.
    pub hi: Option<f64>,
    pub entries: usize,
    pub mean_solution_rate: f64,
}

/// Groups `(complexity, solution rate)` pairs into bins `(lo, hi]` over
/// `edges`, plus a final `(last, inf)` bin. Bins without entries are left
/// out, as are complexities at or below the first edge.
pub fn complexity_binning(items: &[(u32, f64)], edges: &[f64]) -> Result<Vec<ComplexityBin>> {
    if edges.is_empty() {
        return Err(Error::Empty("bin edges"));
    }
    if edges.windows(2).any(|w| w[0] >= w[1] || w[1].is_nan()) {
        return Err(Error::InvalidConfig(
            "bin edges must be strictly increasing".into(),
        ));
    }
    let mut sums = vec![(0usize, 0.0f64); edges.len()];
    for &(c, rate) in items {
        let c = f64::from(c);
        if c <= edges[0] {
            continue;
        }
        // first edge at or above c closes the bin; none means the open bin
        let bin = edges.iter().position(|&e| c <= e).unwrap_or(edges.len()) - 1;
        sums[bin].0 += 1;
        sums[bin].1 += rate;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .filter(|(_, (n, _))| *n > 0)
        .map(|(i, (n, total))| ComplexityBin {
            lo: edges[i],
            hi: edges.get(i + 1).copied(),
            entries: n,
            mean_solution_rate: total / n as f64,
        })
        .collect())
}
