//! Distributional summaries of per-post effects: positive-effect shares,
//! medians, ratio percentiles, quartile assignment, dispersion.

use serde::{Deserialize, Serialize};

use crate::effects::Z_95;

/// Share of strictly positive values with a Wald binomial interval clamped
/// to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveShare {
    pub n: usize,
    pub share: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn positive_share(values: &[f64]) -> Option<PositiveShare> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let k = values.iter().filter(|v| **v > 0.0).count();
    let p = k as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    Some(PositiveShare {
        n,
        share: p,
        ci_low: (p - Z_95 * se).max(0.0),
        ci_high: (p + Z_95 * se).min(1.0),
    })
}

/// Linear-interpolation quantile (the common "type 7" definition): for
/// sorted v and h = (n-1)q, returns v[floor(h)] + frac(h) * (v[floor(h)+1] -
/// v[floor(h)]).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let h = (sorted.len() as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Per-post observed/counterfactual ratios summarized at fixed percentiles.
/// Pairs with a non-positive counterfactual are skipped and counted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioPercentiles {
    pub n: usize,
    pub skipped_nonpositive: usize,
    /// (percentile, ratio at that percentile)
    pub points: Vec<(f64, f64)>,
}

pub fn ratio_percentiles(
    y1: &[f64],
    y0: &[f64],
    percentiles: &[f64],
) -> Option<RatioPercentiles> {
    debug_assert_eq!(y1.len(), y0.len());
    let mut ratios = Vec::with_capacity(y1.len());
    let mut skipped = 0usize;
    for (a, b) in y1.iter().zip(y0) {
        if *b > 0.0 {
            ratios.push(a / b);
        } else {
            skipped += 1;
        }
    }
    if ratios.is_empty() {
        return None;
    }
    let points = percentiles
        .iter()
        .map(|p| (*p, quantile(&ratios, p / 100.0).unwrap()))
        .collect();
    Some(RatioPercentiles {
        n: ratios.len(),
        skipped_nonpositive: skipped,
        points,
    })
}

/// Quartile edges by the nearest-rank rule: edge(p) is the smallest value
/// with at least p% of the sample at or below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartileEdges {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

pub fn quartile_edges(values: &[f64]) -> Option<QuartileEdges> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let edge = |p: f64| -> f64 {
        let idx = (p * n as f64).ceil() as usize;
        sorted[idx.max(1) - 1]
    };
    Some(QuartileEdges {
        q25: edge(0.25),
        q50: edge(0.50),
        q75: edge(0.75),
    })
}

/// Quartile membership: Q1 = v <= q25, Q2 = q25 < v <= q50, Q3 = q50 < v <=
/// q75, Q4 = v > q75. Returns 1..=4.
pub fn quartile_of(v: f64, edges: &QuartileEdges) -> u8 {
    if v <= edges.q25 {
        1
    } else if v <= edges.q50 {
        2
    } else if v <= edges.q75 {
        3
    } else {
        4
    }
}

/// Coefficient of variation: sample sd / mean. Undefined for n < 2 or a
/// zero mean.
pub fn coefficient_of_variation(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return None;
    }
    Some(crate::scm::scales::sample_sd(values) / mean)
}
