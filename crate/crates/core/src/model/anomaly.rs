//! Spike-then-dip screening for cumulative counters. Large transient swings
//! in a count that should only grow indicate backfilled corrections or
//! deletion sweeps; affected posts are excluded rather than repaired.

use serde::{Deserialize, Serialize};

use crate::model::EngagementSeries;
use crate::time::GRID_STEP_MS;

pub const ABS_THRESHOLD: f64 = 25.0;
pub const REL_THRESHOLD: f64 = 0.03;

/// Qualifying-change thresholds; a step change must clear both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyRules {
    /// Minimum absolute step change, in metric units.
    pub abs_threshold: f64,
    /// Minimum step change as a fraction of the previous value.
    pub rel_threshold: f64,
}

impl Default for AnomalyRules {
    fn default() -> Self {
        AnomalyRules {
            abs_threshold: ABS_THRESHOLD,
            rel_threshold: REL_THRESHOLD,
        }
    }
}

/// One qualifying step change. `percent` is `delta / previous_value`, absent
/// when the previous value is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvidence {
    pub age_ms: i64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnomalyFinding {
    pub flagged: bool,
    pub rises: Vec<AnomalyEvidence>,
    pub drops: Vec<AnomalyEvidence>,
}

fn qualifies(delta: f64, prev: f64, rules: &AnomalyRules) -> bool {
    let magnitude_ok = delta.abs() >= rules.abs_threshold;
    let relative_ok = if prev > 0.0 {
        delta.abs() >= rules.rel_threshold * prev
    } else {
        // from zero, any swing that clears the absolute bar clears the
        // relative one too
        true
    };
    magnitude_ok && relative_ok
}

/// Flags a series containing both a qualifying rise and a qualifying drop
/// (at distinct steps, in either order). Both the 25-unit absolute and the
/// 3%-of-previous-value relative thresholds must be met by each.
pub fn detect_anomalies(series: &EngagementSeries, rules: &AnomalyRules) -> AnomalyFinding {
    let mut finding = AnomalyFinding::default();
    for (i, pair) in series.values.windows(2).enumerate() {
        let (prev, next) = (pair[0], pair[1]);
        let delta = next - prev;
        if delta == 0.0 || !qualifies(delta, prev, rules) {
            continue;
        }
        let ev = AnomalyEvidence {
            age_ms: (series.start_step + i as i64 + 1) * GRID_STEP_MS,
            delta,
            percent: (prev > 0.0).then(|| delta / prev),
        };
        if delta > 0.0 {
            finding.rises.push(ev);
        } else {
            finding.drops.push(ev);
        }
    }
    finding.flagged = !finding.rises.is_empty() && !finding.drops.is_empty();
    finding
}
