//! Post-level data model: engagement series on the 15-minute grid, note
//! status history, treatment assignment, and the treated/donor cohort.

pub mod align;
pub mod anomaly;
pub mod eligibility;
pub mod notes;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::time::{step_at_or_before, TimestampMs, GRID_STEP_MS, POST_WINDOW_STEPS};

pub type PostId = String;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Views,
    Replies,
    Likes,
    Reposts,
    FollowerCount,
    CascadeMaxDepth,
    CascadeMaxBreadth,
    StructuralVirality,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Views,
        MetricKind::Replies,
        MetricKind::Likes,
        MetricKind::Reposts,
        MetricKind::FollowerCount,
        MetricKind::CascadeMaxDepth,
        MetricKind::CascadeMaxBreadth,
        MetricKind::StructuralVirality,
    ];

    /// Cumulative engagement counters reported by the platform.
    pub const ENGAGEMENT: [MetricKind; 4] = [
        MetricKind::Views,
        MetricKind::Replies,
        MetricKind::Likes,
        MetricKind::Reposts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Views => "views",
            MetricKind::Replies => "replies",
            MetricKind::Likes => "likes",
            MetricKind::Reposts => "reposts",
            MetricKind::FollowerCount => "follower_count",
            MetricKind::CascadeMaxDepth => "cascade_max_depth",
            MetricKind::CascadeMaxBreadth => "cascade_max_breadth",
            MetricKind::StructuralVirality => "structural_virality",
        }
    }

    /// Parses a metric name as it appears in input files. "impressions" is
    /// accepted as a legacy alias for views.
    pub fn parse(s: &str) -> Option<MetricKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "views" | "impressions" => Some(MetricKind::Views),
            "replies" => Some(MetricKind::Replies),
            "likes" => Some(MetricKind::Likes),
            "reposts" => Some(MetricKind::Reposts),
            "follower_count" | "followers" => Some(MetricKind::FollowerCount),
            "cascade_max_depth" => Some(MetricKind::CascadeMaxDepth),
            "cascade_max_breadth" => Some(MetricKind::CascadeMaxBreadth),
            "structural_virality" => Some(MetricKind::StructuralVirality),
            _ => None,
        }
    }

    /// Metrics that count cumulative events and therefore never decrease in
    /// truthful data. Anomaly screening applies to these.
    pub fn is_cumulative_count(self) -> bool {
        matches!(
            self,
            MetricKind::Views | MetricKind::Replies | MetricKind::Likes | MetricKind::Reposts
        )
    }
}

/// One platform snapshot of one metric for one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    pub post_id: PostId,
    pub metric: MetricKind,
    pub observed_at: TimestampMs,
    pub value: f64,
}

/// Coverage of a series relative to the post's treatment time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilityClass {
    FullyAvailable,
    DroppedPostTreatment,
    DroppedPreTreatment,
    OnlyPostTreatment,
    Unavailable,
}

/// A metric trajectory sampled on consecutive grid ages. `values[i]` is the
/// value at age `(start_step + i) * GRID_STEP_MS` after post creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementSeries {
    pub metric: MetricKind,
    pub start_step: i64,
    pub values: Vec<f64>,
    /// Present once the owning post's treatment time is known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub availability: Option<AvailabilityClass>,
}

impl EngagementSeries {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last covered grid step, inclusive.
    pub fn end_step(&self) -> Option<i64> {
        if self.values.is_empty() {
            None
        } else {
            Some(self.start_step + self.values.len() as i64 - 1)
        }
    }

    pub fn covers_step(&self, step: i64) -> bool {
        step >= self.start_step && step < self.start_step + self.values.len() as i64
    }

    /// Whether every grid step in `[from, to]` is covered.
    pub fn covers_range(&self, from: i64, to: i64) -> bool {
        if from > to {
            return true;
        }
        match self.end_step() {
            Some(end) => self.start_step <= from && to <= end,
            None => false,
        }
    }

    pub fn value_at_step(&self, step: i64) -> Option<f64> {
        if step < self.start_step {
            return None;
        }
        self.values.get((step - self.start_step) as usize).copied()
    }

    pub fn first_age_ms(&self) -> Option<i64> {
        if self.values.is_empty() {
            None
        } else {
            Some(self.start_step * GRID_STEP_MS)
        }
    }

    pub fn last_age_ms(&self) -> Option<i64> {
        self.end_step().map(|s| s * GRID_STEP_MS)
    }
}

/// A span during which a note carried helpful status. `until` is open when
/// the note never left helpful status in the observed history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelpfulSpan {
    pub from: TimestampMs,
    pub until: Option<TimestampMs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub note_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
    pub helpful: Vec<HelpfulSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteStatus {
    Helpful,
    NotHelpful,
    NeedsMoreRatings,
}

impl NoteStatus {
    pub fn name(self) -> &'static str {
        match self {
            NoteStatus::Helpful => "helpful",
            NoteStatus::NotHelpful => "not_helpful",
            NoteStatus::NeedsMoreRatings => "needs_more_ratings",
        }
    }

    pub fn parse(s: &str) -> Option<NoteStatus> {
        match s.trim().to_ascii_lowercase().as_str() {
            "helpful" | "currently_rated_helpful" => Some(NoteStatus::Helpful),
            "not_helpful" | "currently_rated_not_helpful" => Some(NoteStatus::NotHelpful),
            "needs_more_ratings" | "proposed" => Some(NoteStatus::NeedsMoreRatings),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteStatusEvent {
    pub post_id: PostId,
    pub note_id: String,
    pub at: TimestampMs,
    pub status: NoteStatus,
}

/// Descriptive annotations used only for stratified reporting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub partisanship: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub media_type: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub accuracy_concerns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: PostId,
    pub created_at: TimestampMs,
    pub treated: bool,
    /// First instant any note on the post reached helpful status.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub treatment_time: Option<TimestampMs>,
    pub series: BTreeMap<MetricKind, EngagementSeries>,
    #[serde(default)]
    pub labels: Labels,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<NoteRecord>,
}

impl PostRecord {
    pub fn new(post_id: impl Into<PostId>, created_at: TimestampMs) -> Self {
        PostRecord {
            post_id: post_id.into(),
            created_at,
            treated: false,
            treatment_time: None,
            series: BTreeMap::new(),
            labels: Labels::default(),
            notes: Vec::new(),
        }
    }

    /// Post age at treatment, in ms.
    pub fn treatment_age_ms(&self) -> Option<i64> {
        self.treatment_time.map(|t| t.0 - self.created_at.0)
    }

    /// Grid step of the treatment age: the last grid age at or before the
    /// exact attachment instant. All windows are anchored here.
    pub fn treatment_step(&self) -> Option<i64> {
        self.treatment_age_ms().map(step_at_or_before)
    }

    /// Stamps per-series availability classes from the treatment step.
    pub fn classify_series(&mut self) {
        if let Some(a_step) = self.treatment_step() {
            for s in self.series.values_mut() {
                s.availability = Some(classify_availability(s, a_step));
            }
        }
    }
}

/// Partitions a series by its covered age range relative to treatment step
/// `a_step`. Exactly one class applies.
pub fn classify_availability(series: &EngagementSeries, a_step: i64) -> AvailabilityClass {
    let (first, last) = match (series.start_step, series.end_step()) {
        (f, Some(l)) => (f, l),
        _ => return AvailabilityClass::Unavailable,
    };
    if last < a_step {
        AvailabilityClass::DroppedPreTreatment
    } else if first >= a_step {
        AvailabilityClass::OnlyPostTreatment
    } else if last >= a_step + POST_WINDOW_STEPS {
        AvailabilityClass::FullyAvailable
    } else {
        AvailabilityClass::DroppedPostTreatment
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    InsufficientPreTreatment,
    InsufficientPostTreatment,
    AnomalousSeries,
    UnsolvableProgram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub post_id: PostId,
    pub reason: ExclusionReason,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Cohort {
    pub treated: Vec<PostRecord>,
    pub donors: Vec<PostRecord>,
}

impl Cohort {
    /// Builds a cohort, sorting both arms by post id and enforcing that ids
    /// are unique, arms are disjoint, and treatment fields are consistent.
    pub fn new(
        mut treated: Vec<PostRecord>,
        mut donors: Vec<PostRecord>,
    ) -> crate::Result<Cohort> {
        treated.sort_by(|a, b| a.post_id.cmp(&b.post_id));
        donors.sort_by(|a, b| a.post_id.cmp(&b.post_id));
        let mut seen = std::collections::BTreeSet::new();
        for p in treated.iter().chain(donors.iter()) {
            if !seen.insert(p.post_id.clone()) {
                return Err(crate::Error::DataQuality(format!(
                    "duplicate post id {:?}",
                    p.post_id
                )));
            }
        }
        for p in &treated {
            if !p.treated || p.treatment_time.is_none() {
                return Err(crate::Error::DataQuality(format!(
                    "treated post {:?} lacks a treatment time",
                    p.post_id
                )));
            }
            if p.treatment_time.unwrap() < p.created_at {
                return Err(crate::Error::DataQuality(format!(
                    "post {:?} treated before creation",
                    p.post_id
                )));
            }
        }
        for p in &donors {
            if p.treated || p.treatment_time.is_some() {
                return Err(crate::Error::DataQuality(format!(
                    "donor post {:?} carries treatment state",
                    p.post_id
                )));
            }
        }
        Ok(Cohort { treated, donors })
    }

    pub fn donor_index(&self) -> BTreeMap<&str, &PostRecord> {
        self.donors.iter().map(|p| (p.post_id.as_str(), p)).collect()
    }
}
