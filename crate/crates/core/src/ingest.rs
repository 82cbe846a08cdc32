//! Assembly of a post record from raw ingested parts: engagement
//! observations, note status events, labels, and repost event logs. The
//! simulator and the file reader both funnel through here so the two data
//! paths cannot drift apart.

use std::collections::BTreeMap;

use crate::cascade::{cascade_metric_series, repost_count_series, FollowEdgeSet, RepostEvent};
use crate::model::align::align_series;
use crate::model::notes::{assign_treatment, helpful_spans_by_note};
use crate::model::{Labels, MetricKind, NoteRecord, NoteStatusEvent, PostId, PostRecord, RawObservation};
use crate::time::{step_at_or_before, TimestampMs};
use crate::{Error, Result};

/// Everything known about one post before assembly.
#[derive(Debug, Clone, Default)]
pub struct RawPostBundle {
    pub post_id: PostId,
    pub created_at: TimestampMs,
    pub observations: Vec<RawObservation>,
    pub note_events: Vec<NoteStatusEvent>,
    /// note id -> text, for notes whose text is known
    pub note_texts: BTreeMap<String, String>,
    pub labels: Labels,
    pub repost_events: Vec<RepostEvent>,
}

impl RawPostBundle {
    pub fn new(post_id: impl Into<PostId>, created_at: TimestampMs) -> Self {
        RawPostBundle {
            post_id: post_id.into(),
            created_at,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AssembleOptions {
    /// Grid horizon for event-derived cascade series; None derives it from
    /// the latest observation or repost event.
    pub cascade_horizon_steps: Option<i64>,
    /// When a repost event log is present, derive the repost count series
    /// from it instead of the sampled observations (the log is exhaustive;
    /// samples are interpolated).
    pub reposts_from_events: bool,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        AssembleOptions {
            cascade_horizon_steps: None,
            reposts_from_events: true,
        }
    }
}

pub fn assemble_post(
    raw: RawPostBundle,
    graph: Option<&FollowEdgeSet>,
    opts: &AssembleOptions,
) -> Result<PostRecord> {
    let mut post = PostRecord::new(raw.post_id.clone(), raw.created_at);

    let mut by_metric: BTreeMap<MetricKind, Vec<RawObservation>> = BTreeMap::new();
    for obs in raw.observations {
        if obs.post_id != raw.post_id {
            return Err(Error::DataQuality(format!(
                "observation for post {} bundled under {}",
                obs.post_id, raw.post_id
            )));
        }
        by_metric.entry(obs.metric).or_default().push(obs);
    }
    for (metric, group) in by_metric {
        let series = align_series(&group, raw.created_at)?;
        post.series.insert(metric, series);
    }

    if !raw.repost_events.is_empty() {
        if opts.reposts_from_events {
            let horizon = opts
                .cascade_horizon_steps
                .unwrap_or_else(|| derived_horizon(&post, &raw.repost_events));
            let series = repost_count_series(raw.created_at, &raw.repost_events, horizon)?;
            post.series.insert(MetricKind::Reposts, series);
        }
        if let Some(graph) = graph {
            attach_cascade_series(&mut post, &raw.repost_events, graph, opts)?;
        }
    }

    post.treatment_time = assign_treatment(&raw.note_events);
    post.treated = post.treatment_time.is_some();
    post.labels = raw.labels;
    post.notes = helpful_spans_by_note(&raw.note_events)
        .into_iter()
        .map(|(note_id, helpful)| NoteRecord {
            text: raw.note_texts.get(&note_id).cloned(),
            note_id,
            helpful,
        })
        .collect();

    if let Some(t) = post.treatment_time {
        if t < post.created_at {
            return Err(Error::DataQuality(format!(
                "post {}: note became helpful before the post existed",
                post.post_id
            )));
        }
    }

    post.classify_series();
    Ok(post)
}

/// Computes cascade structure series (depth, breadth, virality) from a
/// post's repost events and attaches them, refreshing availability classes.
/// Horizon semantics match assembly: explicit override, else derived from
/// the latest series point or repost event.
pub fn attach_cascade_series(
    post: &mut PostRecord,
    events: &[RepostEvent],
    graph: &FollowEdgeSet,
    opts: &AssembleOptions,
) -> Result<()> {
    if events.is_empty() {
        return Ok(());
    }
    let horizon = opts
        .cascade_horizon_steps
        .unwrap_or_else(|| derived_horizon(post, events));
    for (metric, series) in cascade_metric_series(post.created_at, events, graph, horizon)? {
        post.series.insert(metric, series);
    }
    post.classify_series();
    Ok(())
}

fn derived_horizon(post: &PostRecord, events: &[RepostEvent]) -> i64 {
    let obs_last = post
        .series
        .values()
        .filter_map(|s| s.end_step())
        .max()
        .unwrap_or(0);
    let ev_last = events
        .iter()
        .map(|e| step_at_or_before(e.at.0 - post.created_at.0))
        .max()
        .unwrap_or(0);
    obs_last.max(ev_last).max(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoteStatus;
    use crate::time::GRID_STEP_MS;

    fn obs(post: &str, metric: MetricKind, age_steps: i64, value: f64) -> RawObservation {
        RawObservation {
            post_id: post.into(),
            metric,
            observed_at: TimestampMs(age_steps * GRID_STEP_MS),
            value,
        }
    }

    fn note_event(post: &str, note: &str, at_ms: i64, status: NoteStatus) -> NoteStatusEvent {
        NoteStatusEvent {
            post_id: post.into(),
            note_id: note.into(),
            at: TimestampMs(at_ms),
            status,
        }
    }

    #[test]
    fn assembles_series_treatment_and_notes() {
        let mut raw = RawPostBundle::new("p1", TimestampMs(0));
        raw.observations = vec![
            obs("p1", MetricKind::Views, 0, 0.0),
            obs("p1", MetricKind::Views, 4, 40.0),
            obs("p1", MetricKind::Likes, 0, 0.0),
            obs("p1", MetricKind::Likes, 4, 8.0),
        ];
        raw.note_events = vec![
            note_event("p1", "n1", 2 * GRID_STEP_MS, NoteStatus::NeedsMoreRatings),
            note_event("p1", "n1", 3 * GRID_STEP_MS, NoteStatus::Helpful),
        ];
        raw.note_texts.insert("n1".into(), "Context is missing.".into());

        let post = assemble_post(raw, None, &AssembleOptions::default()).unwrap();
        assert!(post.treated);
        assert_eq!(post.treatment_time, Some(TimestampMs(3 * GRID_STEP_MS)));
        assert_eq!(post.series[&MetricKind::Views].values.len(), 5);
        assert_eq!(post.series[&MetricKind::Views].values[2], 20.0);
        assert_eq!(post.notes.len(), 1);
        assert_eq!(post.notes[0].text.as_deref(), Some("Context is missing."));
        assert_eq!(post.notes[0].helpful.len(), 1);
    }

    #[test]
    fn event_log_overrides_sampled_reposts() {
        let graph = FollowEdgeSet::from_edges([(1u64, 0u64), (2, 0)]);
        let mut raw = RawPostBundle::new("p2", TimestampMs(0));
        // sampled observations claim a smooth climb to 10
        raw.observations = vec![
            obs("p2", MetricKind::Reposts, 0, 0.0),
            obs("p2", MetricKind::Reposts, 4, 10.0),
        ];
        raw.repost_events = vec![
            RepostEvent {
                root_post: "p2".into(),
                reposter: 1,
                at: TimestampMs(GRID_STEP_MS),
            },
            RepostEvent {
                root_post: "p2".into(),
                reposter: 2,
                at: TimestampMs(3 * GRID_STEP_MS),
            },
        ];
        let post = assemble_post(raw, Some(&graph), &AssembleOptions::default()).unwrap();
        let reposts = &post.series[&MetricKind::Reposts];
        assert_eq!(reposts.values, vec![0.0, 1.0, 1.0, 2.0, 2.0]);
        assert!(post.series.contains_key(&MetricKind::CascadeMaxDepth));
        assert!(post.series.contains_key(&MetricKind::CascadeMaxBreadth));
        assert!(post.series.contains_key(&MetricKind::StructuralVirality));
    }

    #[test]
    fn sampled_reposts_kept_when_override_disabled() {
        let mut raw = RawPostBundle::new("p3", TimestampMs(0));
        raw.observations = vec![
            obs("p3", MetricKind::Reposts, 0, 0.0),
            obs("p3", MetricKind::Reposts, 2, 10.0),
        ];
        raw.repost_events = vec![RepostEvent {
            root_post: "p3".into(),
            reposter: 1,
            at: TimestampMs(GRID_STEP_MS),
        }];
        let opts = AssembleOptions {
            reposts_from_events: false,
            ..AssembleOptions::default()
        };
        let post = assemble_post(raw, None, &opts).unwrap();
        assert_eq!(post.series[&MetricKind::Reposts].values, vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn donor_note_never_helpful_stays_untreated() {
        let mut raw = RawPostBundle::new("d1", TimestampMs(0));
        raw.observations = vec![
            obs("d1", MetricKind::Views, 0, 0.0),
            obs("d1", MetricKind::Views, 1, 5.0),
        ];
        raw.note_events = vec![note_event(
            "d1",
            "n9",
            GRID_STEP_MS,
            NoteStatus::NeedsMoreRatings,
        )];
        let post = assemble_post(raw, None, &AssembleOptions::default()).unwrap();
        assert!(!post.treated);
        assert!(post.treatment_time.is_none());
        assert_eq!(post.notes.len(), 1);
        assert!(post.notes[0].helpful.is_empty());
    }

    #[test]
    fn mismatched_bundle_rejected() {
        let mut raw = RawPostBundle::new("a", TimestampMs(0));
        raw.observations = vec![obs("b", MetricKind::Views, 0, 1.0)];
        assert!(assemble_post(raw, None, &AssembleOptions::default()).is_err());
    }
}
