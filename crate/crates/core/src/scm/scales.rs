//! Per-metric standardization scales.
//!
//! Metrics live on wildly different scales (views in millions, virality
//! near 2), so matching distances and the solver's loss work on values
//! divided by the metric's pooled pre-treatment sample standard deviation
//! across treated posts. Values are only divided, never centered.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{MetricKind, PostRecord};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scales {
    pub by_metric: BTreeMap<MetricKind, f64>,
    /// Metrics that cannot be standardized, with the reason.
    pub skipped: Vec<(MetricKind, String)>,
}

impl Scales {
    pub fn get(&self, metric: MetricKind) -> Option<f64> {
        self.by_metric.get(&metric).copied()
    }
}

/// Pools every pre-treatment grid value of every treated post, per metric,
/// and takes the sample (n-1) standard deviation. Metrics observed on fewer
/// than two values, or with zero variance, are skipped.
pub fn compute_scales(treated: &[PostRecord]) -> Scales {
    let mut pooled: BTreeMap<MetricKind, Vec<f64>> = BTreeMap::new();
    for post in treated {
        let a_step = match post.treatment_step() {
            Some(a) => a,
            None => continue,
        };
        for (metric, series) in &post.series {
            let end = series.end_step().unwrap_or(i64::MIN).min(a_step - 1);
            if end < series.start_step {
                continue;
            }
            let vals = pooled.entry(*metric).or_default();
            for step in series.start_step..=end {
                vals.push(series.value_at_step(step).unwrap());
            }
        }
    }

    let mut by_metric = BTreeMap::new();
    let mut skipped = Vec::new();
    for (metric, vals) in pooled {
        if vals.len() < 2 {
            skipped.push((metric, format!("{} pre-treatment values", vals.len())));
            continue;
        }
        let sd = sample_sd(&vals);
        if sd > 0.0 {
            by_metric.insert(metric, sd);
        } else {
            skipped.push((metric, "zero variance".into()));
        }
    }
    Scales { by_metric, skipped }
}

/// Two-pass sample standard deviation with the n-1 denominator.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    debug_assert!(n >= 2);
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n as f64 - 1.0)).sqrt()
}
