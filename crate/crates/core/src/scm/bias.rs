//! Regression bias correction for synthetic control estimates.
//!
//! Even a good weighted match can sit systematically off the treated post's
//! counterfactual when the outcome surface is curved in the matching
//! features. For every (metric, horizon) pair an OLS model of the donor
//! outcome on pre-treatment features is fit on the selected pool, and the
//! difference between the treated post's prediction and the weighted donor
//! prediction is subtracted from the raw estimate:
//!   tau = [Y1 - mu(x_i)] - sum_j w_j [Y0_j - mu(x_j)]
//! The correction vanishes when the synthetic features reproduce the treated
//! features exactly.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{MetricKind, PostRecord};
use crate::scm::donors::MatchSpec;
use crate::scm::scales::Scales;
use crate::time::POST_WINDOW_STEPS;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasOptions {
    pub enabled: bool,
    /// Ridge strength as a fraction of mean diagonal mass, applied when the
    /// normal matrix is ill-conditioned or the pool is smaller than the
    /// feature count plus two.
    pub ridge_scale: f64,
    pub condition_limit: f64,
    /// Carry the fitted coefficient tables on the per-post result so they
    /// land in emitted fit artifacts. Off by default: the tables are large
    /// (one row per metric per horizon step).
    #[serde(default)]
    pub emit_model: bool,
}

impl Default for BiasOptions {
    fn default() -> Self {
        BiasOptions {
            enabled: true,
            ridge_scale: 1e-6,
            condition_limit: 1e10,
            emit_model: false,
        }
    }
}

/// Which values enter the feature vector: per matched metric, standardized
/// levels at five quantile ages of its pre window; plus log1p of the
/// follower level at the last pre age when follower count is matched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub ages: BTreeMap<MetricKind, Vec<i64>>,
    pub follower_log_age: Option<i64>,
}

impl FeatureSpec {
    pub fn from_match_spec(spec: &MatchSpec) -> FeatureSpec {
        let mut ages = BTreeMap::new();
        for metric in &spec.metrics {
            let (from, to) = spec.pre_steps[metric];
            let n = to - from;
            let mut steps: Vec<i64> = [0.0f64, 0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|f| from + (f * n as f64).round() as i64)
                .collect();
            steps.dedup();
            ages.insert(*metric, steps);
        }
        let follower_log_age = spec
            .metrics
            .contains(&MetricKind::FollowerCount)
            .then(|| spec.pre_steps[&MetricKind::FollowerCount].1);
        FeatureSpec {
            ages,
            follower_log_age,
        }
    }

    pub fn len(&self) -> usize {
        self.ages.values().map(Vec::len).sum::<usize>()
            + usize::from(self.follower_log_age.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extracts the feature vector for one post. All referenced values exist
    /// for posts that passed coverage screening.
    pub fn extract(&self, post: &PostRecord, scales: &Scales) -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(self.len());
        for (metric, steps) in &self.ages {
            let series = post.series.get(metric).ok_or_else(|| {
                Error::Infeasible(format!("{:?} lacks {}", post.post_id, metric.name()))
            })?;
            let scale = scales.get(*metric).unwrap_or(1.0);
            for step in steps {
                let val = series.value_at_step(*step).ok_or_else(|| {
                    Error::Infeasible(format!(
                        "{:?} lacks {} at step {}",
                        post.post_id,
                        metric.name(),
                        step
                    ))
                })?;
                v.push(val / scale);
            }
        }
        if let Some(age) = self.follower_log_age {
            let val = post
                .series
                .get(&MetricKind::FollowerCount)
                .and_then(|s| s.value_at_step(age))
                .ok_or_else(|| {
                    Error::Infeasible(format!("{:?} lacks follower level", post.post_id))
                })?;
            v.push(val.max(0.0).ln_1p());
        }
        Ok(v)
    }
}

/// Per-(metric, horizon) linear predictors sharing one factored design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasModel {
    pub spec: FeatureSpec,
    /// Ridge actually added to the normal-matrix diagonal (0 for plain OLS).
    pub ridge: f64,
    pub disabled: bool,
    /// coefficients[metric][t][k]: intercept first, then features, for the
    /// outcome at horizon step t in 0..=POST_WINDOW_STEPS.
    pub coefficients: BTreeMap<MetricKind, Vec<Vec<f64>>>,
}

impl BiasModel {
    pub fn disabled(spec: FeatureSpec) -> BiasModel {
        BiasModel {
            spec,
            ridge: 0.0,
            disabled: true,
            coefficients: BTreeMap::new(),
        }
    }

    pub fn predict(&self, features: &[f64], metric: MetricKind, t: usize) -> Option<f64> {
        if self.disabled {
            return None;
        }
        let beta = self.coefficients.get(&metric)?.get(t)?;
        let mut acc = beta[0];
        for (b, x) in beta[1..].iter().zip(features) {
            acc += b * x;
        }
        Some(acc)
    }
}

/// Fits the correction surface on the selected donors. `donor_outcome(j, m,
/// t)` must return donor j's raw value of metric m at horizon step t.
pub fn fit_bias_model(
    donor_features: &[Vec<f64>],
    spec: FeatureSpec,
    metrics: &[MetricKind],
    donor_outcome: impl Fn(usize, MetricKind, i64) -> f64,
    opts: &BiasOptions,
) -> BiasModel {
    let j = donor_features.len();
    if !opts.enabled || j == 0 {
        return BiasModel::disabled(spec);
    }
    let width = donor_features[0].len();
    debug_assert!(donor_features.iter().all(|f| f.len() == width));
    let p = width + 1; // with intercept

    let a = DMatrix::from_fn(j, p, |r, c| {
        if c == 0 {
            1.0
        } else {
            donor_features[r][c - 1]
        }
    });
    let mut normal = a.transpose() * &a;

    let needs_ridge_by_count = j < p + 2;
    let cond_bad = |n: &DMatrix<f64>| {
        let eig = n.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        min <= 0.0 || max / min > opts.condition_limit
    };

    let mut ridge = 0.0;
    if needs_ridge_by_count || cond_bad(&normal) {
        ridge = opts.ridge_scale * normal.trace() / p as f64;
        for i in 0..p {
            normal[(i, i)] += ridge;
        }
    }

    let chol = match normal.clone().cholesky() {
        Some(c) => c,
        None => {
            // one more escalation before giving up
            let extra = (opts.ridge_scale * 1e3) * normal.trace() / p as f64;
            for i in 0..p {
                normal[(i, i)] += extra;
            }
            ridge += extra;
            match normal.cholesky() {
                Some(c) => c,
                None => return BiasModel::disabled(spec),
            }
        }
    };

    let mut coefficients = BTreeMap::new();
    for metric in metrics {
        let mut per_t = Vec::with_capacity(POST_WINDOW_STEPS as usize + 1);
        for t in 0..=POST_WINDOW_STEPS {
            let y = DVector::from_fn(j, |r, _| donor_outcome(r, *metric, t));
            let rhs = a.transpose() * y;
            let beta = chol.solve(&rhs);
            per_t.push(beta.iter().copied().collect::<Vec<f64>>());
        }
        coefficients.insert(*metric, per_t);
    }

    BiasModel {
        spec,
        ridge,
        disabled: false,
        coefficients,
    }
}
