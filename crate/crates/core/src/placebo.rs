//! Backdating falsification check.
//!
//! If the estimator is sound, pretending the note arrived earlier than it
//! did must produce effects indistinguishable from zero at the shifted
//! "treatment" point, because nothing actually happened there. The full
//! pipeline is re-run against the shifted cohort: scales, donor pools,
//! weights and corrections are all refit.

use serde::{Deserialize, Serialize};

use crate::model::{Cohort, Exclusion, ExclusionReason, PostRecord};
use crate::time::{TimestampMs, GRID_STEP_MS, HOUR_MS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaceboConfig {
    /// How far before the real treatment the fictitious one is placed.
    /// Must be a positive multiple of the grid step.
    pub backdate_ms: i64,
}

impl Default for PlaceboConfig {
    fn default() -> Self {
        PlaceboConfig {
            backdate_ms: HOUR_MS,
        }
    }
}

impl PlaceboConfig {
    pub fn validate(&self) -> Result<()> {
        if self.backdate_ms <= 0 {
            return Err(Error::InvalidConfig(
                "placebo backdate must be positive".into(),
            ));
        }
        if self.backdate_ms % GRID_STEP_MS != 0 {
            return Err(Error::InvalidConfig(format!(
                "placebo backdate must be a multiple of the {}-minute grid step",
                GRID_STEP_MS / 60_000
            )));
        }
        Ok(())
    }

    /// Grid steps between the shifted treatment and the real one; the
    /// placebo effect is read off at this horizon.
    pub fn report_step(&self) -> i64 {
        self.backdate_ms / GRID_STEP_MS
    }
}

fn backdate_post(post: &PostRecord, cfg: &PlaceboConfig) -> Option<PostRecord> {
    let t = post.treatment_time?;
    let shifted = TimestampMs(t.0 - cfg.backdate_ms);
    if shifted < post.created_at {
        return None;
    }
    let mut p = post.clone();
    p.treatment_time = Some(shifted);
    // availability stamps are functions of the treatment step: refresh
    p.classify_series();
    Some(p)
}

/// Shifts every treated post's treatment time earlier by the configured
/// offset. Posts whose shifted time leaves less than an hour of pre window
/// on every metric (or falls before creation) are excluded, mirroring the
/// primary eligibility rule.
pub fn backdate_cohort(
    cohort: &Cohort,
    cfg: &PlaceboConfig,
) -> Result<(Cohort, Vec<Exclusion>)> {
    cfg.validate()?;
    let mut treated = Vec::with_capacity(cohort.treated.len());
    let mut exclusions = Vec::new();
    for post in &cohort.treated {
        match backdate_post(post, cfg) {
            Some(p) => treated.push(p),
            None => exclusions.push(Exclusion {
                post_id: post.post_id.clone(),
                reason: ExclusionReason::InsufficientPreTreatment,
                detail: Some("backdated treatment precedes creation".into()),
            }),
        }
    }
    let shifted = Cohort {
        treated,
        donors: cohort.donors.clone(),
    };
    let rules = crate::model::eligibility::FilterRules {
        coverage: true,
        anomaly: false, // anomaly screening already ran on the real cohort
        ..Default::default()
    };
    let (filtered, mut coverage_exclusions) =
        crate::model::eligibility::filter_cohort(shifted, &rules);
    exclusions.append(&mut coverage_exclusions);
    Ok((filtered, exclusions))
}
