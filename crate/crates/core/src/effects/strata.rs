//! Stratified effect reporting: posts are grouped by attachment speed,
//! pre-treatment traction, content labels, and note attributes, and the ATT
//! machinery runs per group.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::effects::distribution::{quartile_edges, quartile_of};
use crate::effects::text::{flesch_kincaid_grade, sentence_count};
use crate::effects::{att_from_values, AttPoint, EffectOptions};
use crate::model::notes::effective_note_attribute;
use crate::model::{MetricKind, PostId, PostRecord};
use crate::scm::PostFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKey {
    AttachmentSpeed,
    PreTreatmentReposts,
    Partisanship,
    MediaType,
    AccuracyConcern,
    NoteGradeLevel,
    NoteSentenceCount,
}

impl StratumKey {
    pub const ALL: [StratumKey; 7] = [
        StratumKey::AttachmentSpeed,
        StratumKey::PreTreatmentReposts,
        StratumKey::Partisanship,
        StratumKey::MediaType,
        StratumKey::AccuracyConcern,
        StratumKey::NoteGradeLevel,
        StratumKey::NoteSentenceCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StratumKey::AttachmentSpeed => "attachment_speed_quartile",
            StratumKey::PreTreatmentReposts => "pre_treatment_repost_quartile",
            StratumKey::Partisanship => "partisanship",
            StratumKey::MediaType => "media_type",
            StratumKey::AccuracyConcern => "accuracy_concern",
            StratumKey::NoteGradeLevel => "note_grade_level",
            StratumKey::NoteSentenceCount => "note_sentence_count",
        }
    }
}

pub type Membership = BTreeMap<PostId, Vec<String>>;

fn grade_bin(g: f64) -> &'static str {
    if g <= 5.0 {
        "<=5"
    } else if g <= 10.0 {
        "6-10"
    } else {
        ">10"
    }
}

fn sentence_bin(s: f64) -> &'static str {
    let r = s.round();
    if r <= 1.0 {
        "1"
    } else if r <= 3.0 {
        "2-3"
    } else {
        ">3"
    }
}

/// Assigns every post to its strata. Quartile-based keys derive their edges
/// from the posts given here, so pass the full analyzed set. Posts missing
/// the underlying attribute are simply absent from that key's membership.
pub fn stratify(posts: &[&PostRecord]) -> BTreeMap<StratumKey, Membership> {
    let mut out: BTreeMap<StratumKey, Membership> = BTreeMap::new();
    for key in StratumKey::ALL {
        out.insert(key, Membership::new());
    }

    // quartiles of attachment age
    let ages: Vec<(PostId, f64)> = posts
        .iter()
        .filter_map(|p| p.treatment_age_ms().map(|a| (p.post_id.clone(), a as f64)))
        .collect();
    if let Some(edges) = quartile_edges(&ages.iter().map(|(_, a)| *a).collect::<Vec<_>>()) {
        let m = out.get_mut(&StratumKey::AttachmentSpeed).unwrap();
        for (id, a) in &ages {
            m.insert(id.clone(), vec![format!("Q{}", quartile_of(*a, &edges))]);
        }
    }

    // quartiles of repost level at the treatment step
    let traction: Vec<(PostId, f64)> = posts
        .iter()
        .filter_map(|p| {
            let a = p.treatment_step()?;
            let v = p.series.get(&MetricKind::Reposts)?.value_at_step(a)?;
            Some((p.post_id.clone(), v))
        })
        .collect();
    if let Some(edges) = quartile_edges(&traction.iter().map(|(_, v)| *v).collect::<Vec<_>>()) {
        let m = out.get_mut(&StratumKey::PreTreatmentReposts).unwrap();
        for (id, v) in &traction {
            m.insert(id.clone(), vec![format!("Q{}", quartile_of(*v, &edges))]);
        }
    }

    for p in posts {
        if let Some(v) = &p.labels.partisanship {
            out.get_mut(&StratumKey::Partisanship)
                .unwrap()
                .insert(p.post_id.clone(), vec![v.clone()]);
        }
        if let Some(v) = &p.labels.media_type {
            out.get_mut(&StratumKey::MediaType)
                .unwrap()
                .insert(p.post_id.clone(), vec![v.clone()]);
        }
        if !p.labels.accuracy_concerns.is_empty() {
            out.get_mut(&StratumKey::AccuracyConcern)
                .unwrap()
                .insert(p.post_id.clone(), p.labels.accuracy_concerns.clone());
        }
        if let Some(g) = effective_note_attribute(p, |n| {
            n.text.as_deref().and_then(flesch_kincaid_grade)
        }) {
            out.get_mut(&StratumKey::NoteGradeLevel)
                .unwrap()
                .insert(p.post_id.clone(), vec![grade_bin(g).to_string()]);
        }
        if let Some(s) = effective_note_attribute(p, |n| {
            n.text.as_deref().map(|t| sentence_count(t) as f64)
        }) {
            out.get_mut(&StratumKey::NoteSentenceCount)
                .unwrap()
                .insert(p.post_id.clone(), vec![sentence_bin(s).to_string()]);
        }
    }
    out
}

/// ATT per stratum label at one metric/horizon. A post contributes to every
/// label it carries (labels within one key can overlap, e.g. accuracy
/// concerns).
pub fn stratified_att(
    fits: &[&PostFit],
    membership: &Membership,
    metric: MetricKind,
    t: usize,
    opts: &EffectOptions,
) -> BTreeMap<String, AttPoint> {
    let mut grouped: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for fit in fits {
        let labels = match membership.get(&fit.treated_id) {
            Some(l) => l,
            None => continue,
        };
        let ite = match fit.ite.get(&metric) {
            Some(s) => s,
            None => continue,
        };
        for label in labels {
            let slot = grouped.entry(label.as_str()).or_default();
            slot.0.push(ite.tau[t]);
            slot.1.push(ite.y1[t]);
        }
    }
    grouped
        .into_iter()
        .filter_map(|(label, (taus, y1s))| {
            att_from_values(&taus, &y1s, opts).map(|p| (label.to_string(), p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EngagementSeries, HelpfulSpan, NoteRecord};
    use crate::time::{TimestampMs, GRID_STEP_MS};

    fn post(id: &str, a_step: i64, reposts_at_a: f64) -> PostRecord {
        let mut p = PostRecord::new(id, TimestampMs(0));
        p.treated = true;
        p.treatment_time = Some(TimestampMs(a_step * GRID_STEP_MS));
        p.series.insert(
            MetricKind::Reposts,
            EngagementSeries {
                metric: MetricKind::Reposts,
                start_step: 0,
                values: (0..=a_step).map(|_| reposts_at_a).collect(),
                availability: None,
            },
        );
        p
    }

    #[test]
    fn quartile_strata_cover_all_posts() {
        let posts: Vec<PostRecord> = (0..8).map(|i| post(&format!("p{i}"), 4 + i, i as f64)).collect();
        let refs: Vec<&PostRecord> = posts.iter().collect();
        let strata = stratify(&refs);
        let speed = &strata[&StratumKey::AttachmentSpeed];
        assert_eq!(speed.len(), 8);
        assert_eq!(speed["p0"], vec!["Q1"]);
        assert_eq!(speed["p7"], vec!["Q4"]);
        let traction = &strata[&StratumKey::PreTreatmentReposts];
        assert_eq!(traction["p1"], vec!["Q1"]);
        assert_eq!(traction["p7"], vec!["Q4"]);
    }

    #[test]
    fn label_and_note_strata() {
        let mut p = post("p", 4, 3.0);
        p.labels.partisanship = Some("left".into());
        p.labels.media_type = Some("video".into());
        p.labels.accuracy_concerns = vec!["altered_media".into(), "missing_context".into()];
        p.notes.push(NoteRecord {
            note_id: "n1".into(),
            text: Some("Wrong. See the source.".into()),
            helpful: vec![HelpfulSpan {
                from: p.treatment_time.unwrap(),
                until: None,
            }],
        });
        let refs = [&p];
        let strata = stratify(&refs);
        assert_eq!(strata[&StratumKey::Partisanship]["p"], vec!["left"]);
        assert_eq!(strata[&StratumKey::MediaType]["p"], vec!["video"]);
        assert_eq!(
            strata[&StratumKey::AccuracyConcern]["p"],
            vec!["altered_media", "missing_context"]
        );
        // grade of the toy note is far below 5
        assert_eq!(strata[&StratumKey::NoteGradeLevel]["p"], vec!["<=5"]);
        assert_eq!(strata[&StratumKey::NoteSentenceCount]["p"], vec!["2-3"]);
    }

    #[test]
    fn bins_have_documented_edges() {
        assert_eq!(grade_bin(5.0), "<=5");
        assert_eq!(grade_bin(5.01), "6-10");
        assert_eq!(grade_bin(10.0), "6-10");
        assert_eq!(grade_bin(10.5), ">10");
        assert_eq!(sentence_bin(1.0), "1");
        assert_eq!(sentence_bin(1.4), "1");
        assert_eq!(sentence_bin(2.0), "2-3");
        assert_eq!(sentence_bin(3.4), "2-3");
        assert_eq!(sentence_bin(3.6), ">3");
    }

    #[test]
    fn stratified_att_groups_and_overlaps() {
        use crate::scm::{FitDiagnostics, IteSeries};
        let mk_fit = |id: &str, tau: f64| PostFit {
            treated_id: id.to_string(),
            a_step: 4,
            treatment_age_ms: 4 * GRID_STEP_MS,
            matched_metrics: vec![MetricKind::Views],
            weights: vec![],
            ite: [(
                MetricKind::Views,
                IteSeries {
                    metric: MetricKind::Views,
                    y1: vec![10.0; 193],
                    y0_synth: vec![10.0 - tau; 193],
                    tau: vec![tau; 193],
                },
            )]
            .into(),
            diagnostics: FitDiagnostics {
                donors_covering: 5,
                donors_used: 5,
                pre_rmse: 0.0,
                objective: 0.0,
                gap: 0.0,
                iterations: 1,
                converged: true,
                low_quality: false,
                ridge: 0.0,
                bias_disabled: false,
            },
            bias_model: None,
        };
        let fits = vec![mk_fit("a", 1.0), mk_fit("b", 3.0), mk_fit("c", 100.0)];
        let refs: Vec<&PostFit> = fits.iter().collect();
        let mut members = Membership::new();
        members.insert("a".into(), vec!["x".into(), "shared".into()]);
        members.insert("b".into(), vec!["x".into()]);
        // post c carries no label and is ignored
        let by = stratified_att(&refs, &members, MetricKind::Views, 0, &EffectOptions::default());
        assert_eq!(by["x"].n, 2);
        assert!((by["x"].att - 2.0).abs() < 1e-12);
        assert_eq!(by["shared"].n, 1);
        assert!(!by.contains_key("unlabeled"));
    }
}
