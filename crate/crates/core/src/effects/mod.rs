//! Aggregation of per-post effects into cohort-level estimates.

pub mod distribution;
pub mod growth;
pub mod strata;
pub mod text;

use serde::{Deserialize, Serialize};

use crate::model::MetricKind;
use crate::scm::PostFit;
use crate::time::POST_WINDOW_STEPS;

pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeDenominator {
    /// Standard error of the mean: sd / sqrt(n).
    SqrtN,
    /// sd / n, a deliberately conservative legacy variant kept behind this
    /// switch for comparability with earlier reports.
    N,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectOptions {
    pub se_denominator: SeDenominator,
    pub z: f64,
}

impl Default for EffectOptions {
    fn default() -> Self {
        EffectOptions {
            se_denominator: SeDenominator::SqrtN,
            z: Z_95,
        }
    }
}

/// Average treatment effect on the treated at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttPoint {
    pub n: usize,
    pub att: f64,
    pub mean_y1: f64,
    /// Mean bias-corrected counterfactual; always mean_y1 - att.
    pub mean_y0: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_high: Option<f64>,
}

impl AttPoint {
    pub fn ci_covers_zero(&self) -> Option<bool> {
        match (self.ci_low, self.ci_high) {
            (Some(lo), Some(hi)) => Some(lo <= 0.0 && 0.0 <= hi),
            _ => None,
        }
    }
}

/// Builds an ATT point from per-post effect and observed values (parallel
/// slices, one entry per post). Returns `None` on empty input.
pub fn att_from_values(taus: &[f64], y1s: &[f64], opts: &EffectOptions) -> Option<AttPoint> {
    let n = taus.len();
    if n == 0 {
        return None;
    }
    debug_assert_eq!(n, y1s.len());
    let att = taus.iter().sum::<f64>() / n as f64;
    let mean_y1 = y1s.iter().sum::<f64>() / n as f64;
    let (se, ci_low, ci_high) = if n >= 2 {
        let sd = crate::scm::scales::sample_sd(taus);
        let denom = match opts.se_denominator {
            SeDenominator::SqrtN => (n as f64).sqrt(),
            SeDenominator::N => n as f64,
        };
        let se = sd / denom;
        (Some(se), Some(att - opts.z * se), Some(att + opts.z * se))
    } else {
        (None, None, None)
    };
    Some(AttPoint {
        n,
        att,
        mean_y1,
        mean_y0: mean_y1 - att,
        se,
        ci_low,
        ci_high,
    })
}

/// Gathers (tau, y1) across fitted posts for one metric/horizon. Fit order
/// is preserved, so callers passing a sorted slice get deterministic sums.
pub fn gather_at<'a>(
    fits: impl IntoIterator<Item = &'a PostFit>,
    metric: MetricKind,
    t: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut taus = Vec::new();
    let mut y1s = Vec::new();
    for fit in fits {
        if let Some(ite) = fit.ite.get(&metric) {
            taus.push(ite.tau[t]);
            y1s.push(ite.y1[t]);
        }
    }
    (taus, y1s)
}

pub fn att_at(
    fits: &[&PostFit],
    metric: MetricKind,
    t: usize,
    opts: &EffectOptions,
) -> Option<AttPoint> {
    let (taus, y1s) = gather_at(fits.iter().copied(), metric, t);
    att_from_values(&taus, &y1s, opts)
}

/// Full trajectory t = 0..=192. Membership per metric is fixed across t
/// (matched metrics always cover the whole window), so every point has the
/// same n.
pub fn att_series(fits: &[&PostFit], metric: MetricKind, opts: &EffectOptions) -> Vec<AttPoint> {
    (0..=POST_WINDOW_STEPS as usize)
        .filter_map(|t| att_at(fits, metric, t, opts))
        .collect()
}

/// Relative effect on cumulative totals at one horizon:
/// (mean_y1 - mean_y0) / mean_y0. Undefined for a non-positive
/// counterfactual mean.
pub fn percent_change_total(point: &AttPoint) -> Option<f64> {
    (point.mean_y0 > 0.0).then(|| (point.mean_y1 - point.mean_y0) / point.mean_y0)
}

/// Relative effect on within-window growth: both arms' mean change from the
/// treatment step to the horizon, compared. Undefined for non-positive
/// counterfactual growth.
pub fn percent_change_growth(at_start: &AttPoint, at_end: &AttPoint) -> Option<f64> {
    let d1 = at_end.mean_y1 - at_start.mean_y1;
    let d0 = at_end.mean_y0 - at_start.mean_y0;
    (d0 > 0.0).then(|| (d1 - d0) / d0)
}
