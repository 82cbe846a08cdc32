//! Serializable documents emitted by the batch pipeline: cohort archives,
//! fit artifacts, and the effect / placebo / recovery / exclusion reports.
//! Every document is a pure function of its inputs — no clocks, hostnames,
//! or other run-local state — so reruns are byte-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cascade::{RepostEvent, UserId};
use crate::effects::growth::GrowthMatched;
use crate::effects::strata::{stratify, StratumKey};
use crate::effects::{percent_change_growth, percent_change_total, AttPoint, EffectOptions};
use crate::model::{Cohort, Exclusion, ExclusionReason, MetricKind, PostId, PostRecord};
use crate::pipeline::{
    growth_observations, placebo_att, summarize_metrics, FitBatch, MetricSummary, PlaceboRun,
};
use crate::scm::{FitOutcome, PostFit, Scales, ScmConfig};
use crate::sim::GroundTruth;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Weight entries at or below this magnitude are dropped from artifacts.
pub const WEIGHT_EMIT_FLOOR: f64 = 1e-10;

pub fn check_schema(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported schema_version {found} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

/// Validated cohort plus the relational raw material later stages need
/// (follow edges and repost events feed cascade reconstruction) and the
/// cumulative exclusion log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortArchive {
    pub schema_version: u32,
    pub cohort: Cohort,
    /// (follower, followee), sorted.
    #[serde(default)]
    pub follows: Vec<(UserId, UserId)>,
    /// Repost events keyed by root post, in feed order.
    #[serde(default)]
    pub repost_events: BTreeMap<PostId, Vec<RepostEvent>>,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
}

impl CohortArchive {
    pub fn new(cohort: Cohort) -> Self {
        CohortArchive {
            schema_version: SCHEMA_VERSION,
            cohort,
            follows: Vec::new(),
            repost_events: BTreeMap::new(),
            exclusions: Vec::new(),
        }
    }
}

/// Per-post fit results with config and scales, as written by the fit stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub schema_version: u32,
    pub scm: ScmConfig,
    pub scales: Scales,
    pub outcomes: Vec<FitOutcome>,
}

impl FitArtifact {
    /// Packages a batch for emission, dropping numerically-zero weights.
    pub fn from_batch(batch: &FitBatch, scm: &ScmConfig) -> Self {
        let outcomes = batch
            .outcomes
            .iter()
            .map(|o| match o {
                FitOutcome::Fitted(f) => {
                    let mut f = f.clone();
                    f.weights.retain(|(_, w)| *w > WEIGHT_EMIT_FLOOR);
                    FitOutcome::Fitted(f)
                }
                infeasible => infeasible.clone(),
            })
            .collect();
        FitArtifact {
            schema_version: SCHEMA_VERSION,
            scm: scm.clone(),
            scales: batch.scales.clone(),
            outcomes,
        }
    }

    pub fn fitted(&self) -> Vec<&PostFit> {
        self.outcomes.iter().filter_map(FitOutcome::as_fitted).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfeasibleFit {
    pub post_id: PostId,
    pub reason: String,
}

/// One stratum label's effect at the 48h horizon for one metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumRow {
    pub key: String,
    pub label: String,
    pub metric: MetricKind,
    pub at_horizon: AttPoint,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub percent_change_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub percent_change_growth: Option<f64>,
}

/// Growth-matched structure comparison for one cascade shape metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthSection {
    pub structure_metric: MetricKind,
    pub matched: GrowthMatched,
    /// Fits lacking the repost series or the structure series.
    pub skipped_fits: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectReport {
    pub schema_version: u32,
    pub options: EffectOptions,
    pub n_fitted: usize,
    pub infeasible: Vec<InfeasibleFit>,
    pub metrics: Vec<MetricSummary>,
    pub strata: Vec<StratumRow>,
    pub growth: Vec<GrowthSection>,
}

const STRUCTURE_METRICS: [MetricKind; 3] = [
    MetricKind::CascadeMaxDepth,
    MetricKind::CascadeMaxBreadth,
    MetricKind::StructuralVirality,
];

/// Builds the effect report for a fitted batch. `cohort` must be the same
/// (filtered) cohort the batch was fitted on; it supplies the label and note
/// attributes behind stratification.
pub fn build_effect_report(
    cohort: &Cohort,
    batch: &FitBatch,
    opts: &EffectOptions,
    growth_bins: usize,
) -> Result<EffectReport> {
    let fits = batch.fitted();
    let infeasible = batch
        .infeasible()
        .into_iter()
        .map(|(id, reason)| InfeasibleFit {
            post_id: id.to_string(),
            reason: reason.to_string(),
        })
        .collect();

    let metrics = summarize_metrics(&fits, opts);

    // stratify over exactly the fitted posts so quartile edges describe the
    // analyzed population
    let by_id: BTreeMap<&str, &PostRecord> = cohort
        .treated
        .iter()
        .map(|p| (p.post_id.as_str(), p))
        .collect();
    let fitted_records: Vec<&PostRecord> = fits
        .iter()
        .filter_map(|f| by_id.get(f.treated_id.as_str()).copied())
        .collect();
    let membership = stratify(&fitted_records);

    let horizon = crate::time::POST_WINDOW_STEPS as usize;
    let mut strata = Vec::new();
    for key in StratumKey::ALL {
        let members = &membership[&key];
        if members.is_empty() {
            continue;
        }
        for metric in MetricKind::ENGAGEMENT {
            let at_start = crate::effects::strata::stratified_att(&fits, members, metric, 0, opts);
            let at_end =
                crate::effects::strata::stratified_att(&fits, members, metric, horizon, opts);
            for (label, point) in at_end {
                let growth = at_start
                    .get(&label)
                    .and_then(|s| percent_change_growth(s, &point));
                strata.push(StratumRow {
                    key: key.name().to_string(),
                    label,
                    metric,
                    percent_change_total: percent_change_total(&point),
                    percent_change_growth: growth,
                    at_horizon: point,
                });
            }
        }
    }

    let mut growth = Vec::new();
    for structure in STRUCTURE_METRICS {
        let obs = growth_observations(&fits, structure);
        if obs.is_empty() {
            continue;
        }
        let skipped_fits = fits.len() - obs.len() / 2;
        growth.push(GrowthSection {
            structure_metric: structure,
            matched: crate::effects::growth::growth_matched_bins(&obs, growth_bins)?,
            skipped_fits,
        });
    }

    Ok(EffectReport {
        schema_version: SCHEMA_VERSION,
        options: *opts,
        n_fitted: fits.len(),
        infeasible,
        metrics,
        strata,
        growth,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceboMetricRow {
    pub metric: MetricKind,
    /// ATT at the true treatment time, the end of the backdate window.
    pub att: AttPoint,
    /// Pass criterion: the CI covers zero. Absent when n < 2.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub covers_zero: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceboReport {
    pub schema_version: u32,
    pub backdate_ms: i64,
    pub report_step: i64,
    /// Treated posts surviving the backdate eligibility re-check.
    pub n_backdated: usize,
    pub n_fitted: usize,
    pub excluded: Vec<Exclusion>,
    pub infeasible: Vec<InfeasibleFit>,
    pub rows: Vec<PlaceboMetricRow>,
}

pub fn build_placebo_report(
    run: &PlaceboRun,
    backdate_ms: i64,
    opts: &EffectOptions,
) -> PlaceboReport {
    let rows = MetricKind::ALL
        .iter()
        .filter_map(|&metric| {
            placebo_att(run, metric, opts).map(|att| PlaceboMetricRow {
                covers_zero: att.ci_covers_zero(),
                metric,
                att,
            })
        })
        .collect();
    PlaceboReport {
        schema_version: SCHEMA_VERSION,
        backdate_ms,
        report_step: run.report_step,
        n_backdated: run.batch.outcomes.len(),
        n_fitted: run.batch.fitted().len(),
        excluded: run.excluded.clone(),
        infeasible: run
            .batch
            .infeasible()
            .into_iter()
            .map(|(id, reason)| InfeasibleFit {
                post_id: id.to_string(),
                reason: reason.to_string(),
            })
            .collect(),
        rows,
    }
}

/// Estimated-versus-true comparison for one metric at the 48h horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRecovery {
    pub metric: MetricKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub estimated_att: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub true_att: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub att_abs_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub att_rel_error: Option<f64>,
    /// Whether the estimate's sign matches a nonzero truth.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub att_sign_match: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub estimated_growth_change: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub true_growth_change: Option<f64>,
    /// |estimated − true| growth change, in percentage points / 100.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub growth_abs_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub schema_version: u32,
    pub metrics: Vec<MetricRecovery>,
}

pub fn build_recovery_report(report: &EffectReport, truth: &GroundTruth) -> RecoveryReport {
    let horizon = crate::time::POST_WINDOW_STEPS as usize;
    let estimated: BTreeMap<MetricKind, &MetricSummary> =
        report.metrics.iter().map(|m| (m.metric, m)).collect();

    let mut keys: Vec<MetricKind> = estimated.keys().copied().collect();
    for k in truth.true_att.keys() {
        if !keys.contains(k) {
            keys.push(*k);
        }
    }
    keys.sort();

    let metrics = keys
        .into_iter()
        .map(|metric| {
            let est = estimated.get(&metric);
            let est_att = est.map(|m| m.att[horizon].att);
            let true_att = truth.true_att.get(&metric).map(|v| v[horizon]);
            let (abs_err, rel_err, sign) = match (est_att, true_att) {
                (Some(e), Some(t)) => (
                    Some((e - t).abs()),
                    (t != 0.0).then(|| (e - t).abs() / t.abs()),
                    (t != 0.0).then(|| (e > 0.0) == (t > 0.0)),
                ),
                _ => (None, None, None),
            };
            let est_growth = est.and_then(|m| m.percent_change_growth);
            let true_growth = truth.true_growth_change.get(&metric).copied().flatten();
            let growth_abs_error = match (est_growth, true_growth) {
                (Some(e), Some(t)) => Some((e - t).abs()),
                _ => None,
            };
            MetricRecovery {
                metric,
                estimated_att: est_att,
                true_att,
                att_abs_error: abs_err,
                att_rel_error: rel_err,
                att_sign_match: sign,
                estimated_growth_change: est_growth,
                true_growth_change: true_growth,
                growth_abs_error,
            }
        })
        .collect();

    RecoveryReport {
        schema_version: SCHEMA_VERSION,
        metrics,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub schema_version: u32,
    pub total: usize,
    pub by_reason: BTreeMap<ExclusionReason, usize>,
    pub exclusions: Vec<Exclusion>,
}

pub fn build_exclusion_report(exclusions: Vec<Exclusion>) -> ExclusionReport {
    let mut by_reason = BTreeMap::new();
    for e in &exclusions {
        *by_reason.entry(e.reason).or_insert(0) += 1;
    }
    ExclusionReport {
        schema_version: SCHEMA_VERSION,
        total: exclusions.len(),
        by_reason,
        exclusions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{run_fits, run_placebo, PipelineConfig};
    use crate::placebo::PlaceboConfig;
    use crate::time::{TimestampMs, GRID_STEP_MS, POST_WINDOW_STEPS};

    fn linear_post(id: &str, slope: f64, treated_at_step: Option<i64>) -> PostRecord {
        let mut p = PostRecord::new(id, TimestampMs(0));
        if let Some(a) = treated_at_step {
            p.treated = true;
            p.treatment_time = Some(TimestampMs(a * GRID_STEP_MS));
        }
        let last = 8 + POST_WINDOW_STEPS;
        p.series.insert(
            MetricKind::Reposts,
            crate::model::EngagementSeries {
                metric: MetricKind::Reposts,
                start_step: 0,
                values: (0..=last).map(|t| slope * t as f64).collect(),
                availability: None,
            },
        );
        p.labels.partisanship = Some("left".into());
        p.classify_series();
        p
    }

    fn toy() -> (Cohort, PipelineConfig) {
        let treated = vec![
            linear_post("t1", 1.0, Some(8)),
            linear_post("t2", 0.9, Some(8)),
            linear_post("t3", 1.1, Some(8)),
        ];
        let donors = vec![
            linear_post("d1", 0.5, None),
            linear_post("d2", 1.5, None),
            linear_post("d3", 0.8, None),
            linear_post("d4", 1.2, None),
        ];
        (
            Cohort::new(treated, donors).unwrap(),
            PipelineConfig::default(),
        )
    }

    #[test]
    fn effect_report_covers_metrics_and_strata() {
        let (cohort, cfg) = toy();
        let batch = run_fits(&cohort, &cfg).unwrap();
        let report = build_effect_report(&cohort, &batch, &cfg.effects, cfg.growth_bins).unwrap();
        assert_eq!(report.schema_version, SCHEMA_VERSION);
        assert_eq!(report.n_fitted, 3);
        assert!(report.infeasible.is_empty());
        assert_eq!(report.metrics.len(), 1);
        assert_eq!(report.metrics[0].metric, MetricKind::Reposts);
        // every post shares one partisanship label
        let partisan: Vec<_> = report
            .strata
            .iter()
            .filter(|r| r.key == "partisanship")
            .collect();
        assert_eq!(partisan.len(), 1);
        assert_eq!(partisan[0].label, "left");
        assert_eq!(partisan[0].at_horizon.n, 3);
        // no cascade metrics -> no growth sections
        assert!(report.growth.is_empty());
        // deterministic serialization round-trip
        let json = serde_json::to_string(&report).unwrap();
        let back: EffectReport = serde_json::from_str(&json).unwrap();
        assert_eq!(json, serde_json::to_string(&back).unwrap());
    }

    #[test]
    fn fit_artifact_drops_zero_weights() {
        let (cohort, cfg) = toy();
        let batch = run_fits(&cohort, &cfg).unwrap();
        let artifact = FitArtifact::from_batch(&batch, &cfg.scm);
        for fit in artifact.fitted() {
            assert!(fit.weights.iter().all(|(_, w)| *w > WEIGHT_EMIT_FLOOR));
            let total: f64 = fit.weights.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn placebo_report_rows_cover_zero_in_a_null_world() {
        let (cohort, cfg) = toy();
        let run = run_placebo(&cohort, &PlaceboConfig::default(), &cfg).unwrap();
        let report = build_placebo_report(&run, PlaceboConfig::default().backdate_ms, &cfg.effects);
        assert_eq!(report.report_step, 4);
        assert_eq!(report.n_backdated, 3);
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!(row.covers_zero, Some(true));
        assert!(row.att.att.abs() < 1e-3);
    }

    #[test]
    fn exclusion_report_counts_by_reason() {
        let exclusions = vec![
            Exclusion {
                post_id: "a".into(),
                reason: ExclusionReason::AnomalousSeries,
                detail: None,
            },
            Exclusion {
                post_id: "b".into(),
                reason: ExclusionReason::AnomalousSeries,
                detail: None,
            },
            Exclusion {
                post_id: "c".into(),
                reason: ExclusionReason::InsufficientPreTreatment,
                detail: None,
            },
        ];
        let report = build_exclusion_report(exclusions);
        assert_eq!(report.total, 3);
        assert_eq!(report.by_reason[&ExclusionReason::AnomalousSeries], 2);
        assert_eq!(
            report.by_reason[&ExclusionReason::InsufficientPreTreatment],
            1
        );
    }

    #[test]
    fn schema_check_rejects_other_versions() {
        assert!(check_schema(SCHEMA_VERSION).is_ok());
        assert!(check_schema(SCHEMA_VERSION + 1).is_err());
    }
}
