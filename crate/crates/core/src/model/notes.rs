//! Note status histories: treatment assignment and helpful-time-weighted
//! note attributes.
//!
//! A post is treated at the first instant any of its notes reaches helpful
//! status. Attributes of the attached note (reading grade, length) are
//! averaged over the 48h effect window weighted by how long each note held
//! helpful status inside that window, since the visible note can change.

use std::collections::BTreeMap;

use crate::model::{HelpfulSpan, NoteStatus, NoteStatusEvent, PostRecord};
use crate::time::{TimestampMs, POST_WINDOW_MS};

/// Earliest helpful transition across all of a post's notes, if any.
pub fn assign_treatment(events: &[NoteStatusEvent]) -> Option<TimestampMs> {
    events
        .iter()
        .filter(|e| e.status == NoteStatus::Helpful)
        .map(|e| e.at)
        .min()
}

/// Folds one note's status events into helpful spans. Events are processed in
/// time order; at equal timestamps the later row wins. The final span is open
/// if the note was still helpful at the end of the observed history.
pub fn note_helpful_spans(events: &[&NoteStatusEvent]) -> Vec<HelpfulSpan> {
    let mut ordered: Vec<&NoteStatusEvent> = events.to_vec();
    ordered.sort_by_key(|e| e.at);
    let mut spans = Vec::new();
    let mut open: Option<TimestampMs> = None;
    for e in ordered {
        match (e.status == NoteStatus::Helpful, open) {
            (true, None) => open = Some(e.at),
            (false, Some(from)) => {
                if e.at > from {
                    spans.push(HelpfulSpan {
                        from,
                        until: Some(e.at),
                    });
                }
                open = None;
            }
            _ => {}
        }
    }
    if let Some(from) = open {
        spans.push(HelpfulSpan { from, until: None });
    }
    spans
}

/// Groups raw status events by note id and folds each into spans.
pub fn helpful_spans_by_note(events: &[NoteStatusEvent]) -> BTreeMap<String, Vec<HelpfulSpan>> {
    let mut by_note: BTreeMap<String, Vec<&NoteStatusEvent>> = BTreeMap::new();
    for e in events {
        by_note.entry(e.note_id.clone()).or_default().push(e);
    }
    by_note
        .into_iter()
        .map(|(id, evs)| (id, note_helpful_spans(&evs)))
        .collect()
}

fn clipped_ms(span: &HelpfulSpan, window: (i64, i64)) -> i64 {
    let from = span.from.0.max(window.0);
    let until = span.until.map(|t| t.0).unwrap_or(i64::MAX).min(window.1);
    (until - from).max(0)
}

/// Helpful-time weight of each note inside `[T, T + 48h]`, normalized over
/// notes with positive helpful time. Empty when no note was helpful inside
/// the window (possible only for untreated posts).
pub fn note_window_weights(post: &PostRecord) -> Vec<(String, f64)> {
    let t = match post.treatment_time {
        Some(t) => t,
        None => return Vec::new(),
    };
    let window = (t.0, t.0 + POST_WINDOW_MS);
    let ms: Vec<(String, i64)> = post
        .notes
        .iter()
        .map(|n| {
            let total: i64 = n.helpful.iter().map(|s| clipped_ms(s, window)).sum();
            (n.note_id.clone(), total)
        })
        .filter(|(_, ms)| *ms > 0)
        .collect();
    let total: i64 = ms.iter().map(|(_, m)| m).sum();
    if total == 0 {
        return Vec::new();
    }
    ms.into_iter()
        .map(|(id, m)| (id, m as f64 / total as f64))
        .collect()
}

/// Helpful-time-weighted average of a per-note attribute over the effect
/// window. Notes whose attribute is unavailable are dropped and the weights
/// renormalized; `None` when no weighted note has the attribute.
pub fn effective_note_attribute(
    post: &PostRecord,
    attribute: impl Fn(&crate::model::NoteRecord) -> Option<f64>,
) -> Option<f64> {
    let weights = note_window_weights(post);
    if weights.is_empty() {
        return None;
    }
    let by_id: BTreeMap<&str, &crate::model::NoteRecord> = post
        .notes
        .iter()
        .map(|n| (n.note_id.as_str(), n))
        .collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (id, w) in &weights {
        if let Some(v) = by_id.get(id.as_str()).and_then(|n| attribute(n)) {
            num += w * v;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoteRecord, PostRecord};
    use crate::time::HOUR_MS;

    fn event(note: &str, at: i64, status: NoteStatus) -> NoteStatusEvent {
        NoteStatusEvent {
            post_id: "p".into(),
            note_id: note.into(),
            at: TimestampMs(at),
            status,
        }
    }

    #[test]
    fn treatment_is_first_helpful_across_notes() {
        let events = vec![
            event("n2", 5 * HOUR_MS, NoteStatus::Helpful),
            event("n1", HOUR_MS, NoteStatus::NeedsMoreRatings),
            event("n1", 3 * HOUR_MS, NoteStatus::Helpful),
            event("n1", 4 * HOUR_MS, NoteStatus::NotHelpful),
        ];
        assert_eq!(assign_treatment(&events), Some(TimestampMs(3 * HOUR_MS)));
        assert_eq!(assign_treatment(&[event("n", 0, NoteStatus::NotHelpful)]), None);
    }

    #[test]
    fn spans_fold_status_flips() {
        let evs = vec![
            event("n", HOUR_MS, NoteStatus::Helpful),
            event("n", 2 * HOUR_MS, NoteStatus::NotHelpful),
            event("n", 6 * HOUR_MS, NoteStatus::Helpful),
        ];
        let refs: Vec<&NoteStatusEvent> = evs.iter().collect();
        let spans = note_helpful_spans(&refs);
        assert_eq!(spans.len(), 2);
        assert_eq!(spans[0].from, TimestampMs(HOUR_MS));
        assert_eq!(spans[0].until, Some(TimestampMs(2 * HOUR_MS)));
        assert_eq!(spans[1].until, None);
    }

    #[test]
    fn repeated_helpful_events_do_not_restart_span() {
        let evs = vec![
            event("n", HOUR_MS, NoteStatus::Helpful),
            event("n", 2 * HOUR_MS, NoteStatus::Helpful),
            event("n", 3 * HOUR_MS, NoteStatus::NeedsMoreRatings),
        ];
        let refs: Vec<&NoteStatusEvent> = evs.iter().collect();
        let spans = note_helpful_spans(&refs);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].from, TimestampMs(HOUR_MS));
        assert_eq!(spans[0].until, Some(TimestampMs(3 * HOUR_MS)));
    }

    fn treated_post(notes: Vec<NoteRecord>, t: i64) -> PostRecord {
        let mut p = PostRecord::new("p", TimestampMs(0));
        p.treated = true;
        p.treatment_time = Some(TimestampMs(t));
        p.notes = notes;
        p
    }

    fn note(id: &str, spans: Vec<(i64, Option<i64>)>) -> NoteRecord {
        NoteRecord {
            note_id: id.into(),
            text: None,
            helpful: spans
                .into_iter()
                .map(|(f, u)| HelpfulSpan {
                    from: TimestampMs(f),
                    until: u.map(TimestampMs),
                })
                .collect(),
        }
    }

    #[test]
    fn handoff_between_notes_weights_by_helpful_time() {
        // A helpful for the first 12h of the window, B for the remaining 36h
        let t = 10 * HOUR_MS;
        let post = treated_post(
            vec![
                note("a", vec![(t, Some(t + 12 * HOUR_MS))]),
                note("b", vec![(t + 12 * HOUR_MS, None)]),
            ],
            t,
        );
        let grades: BTreeMap<&str, f64> = [("a", 8.0), ("b", 12.0)].into();
        let got = effective_note_attribute(&post, |n| grades.get(n.note_id.as_str()).copied())
            .unwrap();
        // (12*8 + 36*12) / 48 = 11.0
        assert!((got - 11.0).abs() < 1e-12);

        let w = note_window_weights(&post);
        let total: f64 = w.iter().map(|(_, x)| x).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((w[0].1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn helpful_only_before_window_gets_zero_weight() {
        let t = 10 * HOUR_MS;
        let post = treated_post(
            vec![
                note("early", vec![(HOUR_MS, Some(t))]),
                note("live", vec![(t, None)]),
            ],
            t,
        );
        let w = note_window_weights(&post);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].0, "live");
        assert!((w[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_attribute_renormalizes() {
        let t = 0;
        let post = treated_post(
            vec![
                note("a", vec![(0, Some(24 * HOUR_MS))]),
                note("b", vec![(24 * HOUR_MS, None)]),
            ],
            t,
        );
        // attribute only computable for b
        let got = effective_note_attribute(&post, |n| {
            (n.note_id == "b").then_some(5.0)
        });
        assert_eq!(got, Some(5.0));
        let none = effective_note_attribute(&post, |_| None);
        assert_eq!(none, None);
    }

    #[test]
    fn untreated_post_has_no_weights() {
        let p = PostRecord::new("p", TimestampMs(0));
        assert!(note_window_weights(&p).is_empty());
    }
}
