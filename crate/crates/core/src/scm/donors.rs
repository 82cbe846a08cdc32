//! Matched-metric resolution and donor screening/selection.
//!
//! A treated post is matched on every standardizable metric for which it has
//! at least one pre-treatment grid value and a complete 48h post window.
//! Donors must cover all of the treated post's matched grid ages (their own
//! ages, not calendar time); survivors are ranked by standardized Euclidean
//! pre-treatment distance and the nearest `pool_size` enter the program.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{MetricKind, PostId, PostRecord};
use crate::scm::scales::Scales;
use crate::time::POST_WINDOW_STEPS;
use crate::{Error, Result};

/// What one treated post is matched on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchSpec {
    pub a_step: i64,
    /// Matched metrics, ascending.
    pub metrics: Vec<MetricKind>,
    /// Inclusive pre-treatment step range per matched metric.
    pub pre_steps: BTreeMap<MetricKind, (i64, i64)>,
}

impl MatchSpec {
    /// Total number of matched (metric, step) pairs.
    pub fn pair_count(&self) -> usize {
        self.pre_steps
            .values()
            .map(|(a, b)| (b - a + 1) as usize)
            .sum()
    }
}

pub fn match_spec(treated: &PostRecord, scales: &Scales) -> Result<MatchSpec> {
    let a_step = treated
        .treatment_step()
        .ok_or_else(|| Error::Infeasible(format!("{:?} has no treatment time", treated.post_id)))?;
    let mut metrics = Vec::new();
    let mut pre_steps = BTreeMap::new();
    for (metric, series) in &treated.series {
        if scales.get(*metric).is_none() {
            continue;
        }
        let last = match series.end_step() {
            Some(l) => l,
            None => continue,
        };
        let pre_from = series.start_step;
        let pre_to = a_step - 1;
        if pre_from > pre_to {
            continue; // no pre-treatment point
        }
        if last < a_step + POST_WINDOW_STEPS {
            continue; // post window incomplete
        }
        metrics.push(*metric);
        pre_steps.insert(*metric, (pre_from, pre_to));
    }
    if metrics.is_empty() {
        return Err(Error::Infeasible(format!(
            "{:?} has no matchable metric",
            treated.post_id
        )));
    }
    metrics.sort();
    Ok(MatchSpec {
        a_step,
        metrics,
        pre_steps,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DonorSelection {
    /// Selected donor ids, ascending by distance (ties by id).
    pub donor_ids: Vec<PostId>,
    pub distances: Vec<f64>,
    /// Donors rejected for not covering the treated post's matched ages.
    pub screened_out: usize,
}

/// Whether a donor covers every matched age of the spec.
fn donor_covers(donor: &PostRecord, spec: &MatchSpec) -> bool {
    for metric in &spec.metrics {
        let series = match donor.series.get(metric) {
            Some(s) => s,
            None => return false,
        };
        let (from, to) = spec.pre_steps[metric];
        if !series.covers_range(from, to) {
            return false;
        }
        if !series.covers_range(spec.a_step, spec.a_step + POST_WINDOW_STEPS) {
            return false;
        }
    }
    true
}

/// Root-mean-square standardized pre-treatment distance between the treated
/// post and one covering donor.
fn pre_distance(
    treated: &PostRecord,
    donor: &PostRecord,
    spec: &MatchSpec,
    scales: &Scales,
) -> f64 {
    let mut ss = 0.0;
    let mut n = 0usize;
    for metric in &spec.metrics {
        let scale = scales.get(*metric).unwrap();
        let ts = &treated.series[metric];
        let ds = &donor.series[metric];
        let (from, to) = spec.pre_steps[metric];
        for step in from..=to {
            let d =
                (ts.value_at_step(step).unwrap() - ds.value_at_step(step).unwrap()) / scale;
            ss += d * d;
            n += 1;
        }
    }
    (ss / n as f64).sqrt()
}

pub fn select_donors(
    treated: &PostRecord,
    donors: &[PostRecord],
    spec: &MatchSpec,
    scales: &Scales,
    pool_size: usize,
) -> Result<DonorSelection> {
    let mut ranked: Vec<(f64, &PostId)> = Vec::new();
    let mut screened_out = 0usize;
    for d in donors {
        if donor_covers(d, spec) {
            ranked.push((pre_distance(treated, d, spec, scales), &d.post_id));
        } else {
            screened_out += 1;
        }
    }
    if ranked.len() < 2 {
        return Err(Error::Infeasible(format!(
            "{:?}: only {} donors cover the matched ages",
            treated.post_id,
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    ranked.truncate(pool_size.max(2));
    Ok(DonorSelection {
        donor_ids: ranked.iter().map(|(_, id)| (*id).clone()).collect(),
        distances: ranked.iter().map(|(d, _)| *d).collect(),
        screened_out,
    })
}

/// Standardized pre-treatment vector of one post under a match spec, columns
/// ordered metric-major then step-ascending.
pub fn standardized_pre_vector(
    post: &PostRecord,
    spec: &MatchSpec,
    scales: &Scales,
) -> Vec<f64> {
    let mut v = Vec::with_capacity(spec.pair_count());
    for metric in &spec.metrics {
        let scale = scales.get(*metric).unwrap();
        let s = &post.series[metric];
        let (from, to) = spec.pre_steps[metric];
        for step in from..=to {
            v.push(s.value_at_step(step).unwrap() / scale);
        }
    }
    v
}
