//! Projection of irregular platform snapshots onto the 15-minute grid.

use crate::model::{EngagementSeries, MetricKind, RawObservation};
use crate::time::{step_at_or_after, step_at_or_before, TimestampMs, GRID_STEP_MS};
use crate::{Error, Result};

/// Linearly interpolates one post/metric's snapshots at every grid age inside
/// the observed span. No extrapolation: grid ages outside
/// `[first_obs, last_obs]` are absent from the result, so a span shorter than
/// one grid step can produce an empty series.
///
/// Duplicate observation timestamps keep the last row. Observations before
/// post creation are rejected.
pub fn align_series(
    observations: &[RawObservation],
    created_at: TimestampMs,
) -> Result<EngagementSeries> {
    let metric = observations
        .first()
        .map(|o| o.metric)
        .ok_or_else(|| Error::DataQuality("cannot align an empty observation set".into()))?;

    let mut points: Vec<(i64, f64)> = Vec::with_capacity(observations.len());
    for o in observations {
        if o.metric != metric {
            return Err(Error::DataQuality(format!(
                "mixed metrics in one alignment call: {} vs {}",
                metric.name(),
                o.metric.name()
            )));
        }
        if !o.value.is_finite() {
            return Err(Error::DataQuality(format!(
                "non-finite {} observation for {:?}",
                metric.name(),
                o.post_id
            )));
        }
        let age = o.observed_at.0 - created_at.0;
        if age < 0 {
            return Err(Error::DataQuality(format!(
                "{} observation for {:?} precedes post creation",
                metric.name(),
                o.post_id
            )));
        }
        points.push((age, o.value));
    }
    points.sort_by(|a, b| a.0.cmp(&b.0));
    points.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 = later.1; // keep the later row's value
            true
        } else {
            false
        }
    });

    let first_age = points[0].0;
    let last_age = points[points.len() - 1].0;
    let start_step = step_at_or_after(first_age);
    let end_step = step_at_or_before(last_age);

    let mut values = Vec::new();
    if start_step <= end_step {
        values.reserve((end_step - start_step + 1) as usize);
        let mut seg = 0usize; // index of the segment's left endpoint
        for step in start_step..=end_step {
            let age = step * GRID_STEP_MS;
            while seg + 1 < points.len() && points[seg + 1].0 < age {
                seg += 1;
            }
            let (a0, v0) = points[seg];
            values.push(if age == a0 || seg + 1 == points.len() {
                v0
            } else {
                let (a1, v1) = points[seg + 1];
                v0 + (v1 - v0) * ((age - a0) as f64 / (a1 - a0) as f64)
            });
        }
    }

    Ok(EngagementSeries {
        metric,
        start_step,
        values,
        availability: None,
    })
}

/// Convenience: aligns from (age_ms, value) pairs, mostly for tests and the
/// simulator where ages are already relative.
pub fn align_from_ages(
    metric: MetricKind,
    pairs: &[(i64, f64)],
    post_id: &str,
) -> Result<EngagementSeries> {
    let created = TimestampMs(0);
    let obs: Vec<RawObservation> = pairs
        .iter()
        .map(|&(age, value)| RawObservation {
            post_id: post_id.to_string(),
            metric,
            observed_at: TimestampMs(age),
            value,
        })
        .collect();
    align_series(&obs, created)
}
