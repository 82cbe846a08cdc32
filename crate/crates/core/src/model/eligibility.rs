//! Cohort filters: coverage eligibility for treated posts and anomaly
//! screening for everything.

use serde::{Deserialize, Serialize};

use crate::model::anomaly::{detect_anomalies, AnomalyRules};
use crate::model::{Cohort, Exclusion, ExclusionReason, PostRecord};
use crate::time::{HOUR_MS, POST_WINDOW_STEPS};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    /// Require >=1h pre-treatment and >=48h post-treatment coverage on at
    /// least one metric. Applies to treated posts only.
    pub coverage: bool,
    /// Drop posts whose cumulative counters show a spike-then-dip anomaly.
    /// Applies to both arms.
    pub anomaly: bool,
    pub anomaly_rules: AnomalyRules,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            coverage: true,
            anomaly: true,
            anomaly_rules: AnomalyRules::default(),
        }
    }
}

const PRE_STEPS_MIN: i64 = HOUR_MS / crate::time::GRID_STEP_MS; // 4

/// Whether some series supports estimation: a pre window of at least 1h and
/// a complete 48h post window.
fn coverage_status(post: &PostRecord) -> (bool, bool) {
    let a_step = match post.treatment_step() {
        Some(a) => a,
        None => return (false, false),
    };
    let mut any_pre = false;
    let mut any_both = false;
    for s in post.series.values() {
        let (first, last) = match (s.start_step, s.end_step()) {
            (f, Some(l)) => (f, l),
            _ => continue,
        };
        let pre_ok = a_step - first >= PRE_STEPS_MIN;
        let post_ok = last >= a_step + POST_WINDOW_STEPS;
        any_pre |= pre_ok;
        any_both |= pre_ok && post_ok;
    }
    (any_pre, any_both)
}

fn anomaly_detail(post: &PostRecord, rules: &AnomalyRules) -> Option<String> {
    let mut hits = Vec::new();
    for (m, s) in &post.series {
        if !m.is_cumulative_count() {
            continue;
        }
        let f = detect_anomalies(s, rules);
        if f.flagged {
            hits.push(m.name());
        }
    }
    if hits.is_empty() {
        None
    } else {
        Some(hits.join(","))
    }
}

/// Applies the enabled filters, returning the surviving cohort and one
/// exclusion record per removed post. Donors are only ever removed by the
/// anomaly screen.
pub fn filter_cohort(cohort: Cohort, rules: &FilterRules) -> (Cohort, Vec<Exclusion>) {
    let mut exclusions = Vec::new();
    let mut treated = Vec::with_capacity(cohort.treated.len());
    for post in cohort.treated {
        if rules.anomaly {
            if let Some(detail) = anomaly_detail(&post, &rules.anomaly_rules) {
                exclusions.push(Exclusion {
                    post_id: post.post_id,
                    reason: ExclusionReason::AnomalousSeries,
                    detail: Some(detail),
                });
                continue;
            }
        }
        if rules.coverage {
            let (any_pre, any_both) = coverage_status(&post);
            if !any_both {
                exclusions.push(Exclusion {
                    post_id: post.post_id,
                    reason: if any_pre {
                        ExclusionReason::InsufficientPostTreatment
                    } else {
                        ExclusionReason::InsufficientPreTreatment
                    },
                    detail: None,
                });
                continue;
            }
        }
        treated.push(post);
    }
    let mut donors = Vec::with_capacity(cohort.donors.len());
    for post in cohort.donors {
        if rules.anomaly {
            if let Some(detail) = anomaly_detail(&post, &rules.anomaly_rules) {
                exclusions.push(Exclusion {
                    post_id: post.post_id,
                    reason: ExclusionReason::AnomalousSeries,
                    detail: Some(detail),
                });
                continue;
            }
        }
        donors.push(post);
    }
    (Cohort { treated, donors }, exclusions)
}
