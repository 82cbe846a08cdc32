//! Reads the raw CSV corpus, assembles post records on the 15-minute grid,
//! and writes a cohort archive.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;

use notefx::cascade::RepostEvent;
use notefx::ingest::{assemble_post, AssembleOptions, RawPostBundle};
use notefx::model::{Cohort, MetricKind, PostRecord, RawObservation};
use notefx::par;
use notefx::report::{CohortArchive, SCHEMA_VERSION};

use crate::config::FileConfig;
use crate::io::{self, schema_err};

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// Post metadata CSV: post_id, created_at, author_follower_count
    #[arg(long)]
    pub posts: PathBuf,
    /// Engagement snapshot CSV: post_id, metric, observed_at, value
    #[arg(long)]
    pub observations: PathBuf,
    /// Note status CSV: post_id, note_id, status, at, note_text_ref
    #[arg(long)]
    pub note_events: PathBuf,
    /// Optional annotation CSV: post_id, key, value (multi-valued keys repeat)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Optional repost log CSV: root_post_id, reposter_id, at
    #[arg(long)]
    pub reposts: Option<PathBuf>,
    /// Optional follow edge CSV: follower_id, followee_id
    #[arg(long)]
    pub follows: Option<PathBuf>,
    /// Output directory for archive.json and ingest_summary.json
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    schema_version: u32,
    posts: usize,
    treated: usize,
    donors: usize,
    observation_rows: usize,
    note_event_rows: usize,
    label_rows: usize,
    repost_rows: usize,
    follow_edges: usize,
    metrics_present: Vec<String>,
}

pub fn run(args: &IngestArgs, cfg: &FileConfig) -> Result<()> {
    super::ensure_dir(&args.out)?;

    let posts = io::read_posts(&args.posts)?;
    if posts.is_empty() {
        return schema_err(format!("{}: no data rows", args.posts.display()));
    }
    let mut known: BTreeMap<&str, u64> = BTreeMap::new();
    for row in &posts {
        if let Some(first) = known.insert(&row.post_id, row.line) {
            return schema_err(format!(
                "{} line {}: duplicate post_id {:?} (first at line {first})",
                args.posts.display(),
                row.line,
                row.post_id
            ));
        }
    }

    let observations = io::read_observations(&args.observations)?;
    if observations.is_empty() {
        return schema_err(format!("{}: no data rows", args.observations.display()));
    }
    let mut obs_by_post: BTreeMap<String, Vec<RawObservation>> = BTreeMap::new();
    for (obs, line) in observations {
        if !known.contains_key(obs.post_id.as_str()) {
            return schema_err(format!(
                "{} line {line}: unknown post_id {:?}",
                args.observations.display(),
                obs.post_id
            ));
        }
        obs_by_post.entry(obs.post_id.clone()).or_default().push(obs);
    }
    let observation_rows = obs_by_post.values().map(Vec::len).sum();

    let note_rows = io::read_note_events(&args.note_events)?;
    let note_event_rows = note_rows.len();
    let mut notes_by_post: BTreeMap<String, Vec<notefx::model::NoteStatusEvent>> = BTreeMap::new();
    let mut texts_by_post: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for row in &note_rows {
        let post_id = &row.event.post_id;
        if !known.contains_key(post_id.as_str()) {
            return schema_err(format!(
                "{} line {}: unknown post_id {post_id:?}",
                args.note_events.display(),
                row.line
            ));
        }
        if let Some(text) = &row.text {
            let texts = texts_by_post.entry(post_id.clone()).or_default();
            if let Some(existing) = texts.get(&row.event.note_id) {
                if existing != text {
                    return schema_err(format!(
                        "{} line {}: conflicting text for note {:?}",
                        args.note_events.display(),
                        row.line,
                        row.event.note_id
                    ));
                }
            } else {
                texts.insert(row.event.note_id.clone(), text.clone());
            }
        }
        notes_by_post
            .entry(post_id.clone())
            .or_default()
            .push(row.event.clone());
    }

    let mut labels_by_post = BTreeMap::new();
    let mut label_rows = 0usize;
    if let Some(path) = &args.labels {
        let rows = io::read_labels(path)?;
        label_rows = rows.len();
        for row in &rows {
            if !known.contains_key(row.post_id.as_str()) {
                return schema_err(format!(
                    "{} line {}: unknown post_id {:?}",
                    path.display(),
                    row.line,
                    row.post_id
                ));
            }
        }
        labels_by_post = io::labels_by_post(&rows, path)?;
    }

    let mut reposts_by_post: BTreeMap<String, Vec<RepostEvent>> = BTreeMap::new();
    let mut repost_rows = 0usize;
    if let Some(path) = &args.reposts {
        let rows = io::read_reposts(path)?;
        repost_rows = rows.len();
        for (ev, line) in rows {
            if !known.contains_key(ev.root_post.as_str()) {
                return schema_err(format!(
                    "{} line {line}: unknown root_post_id {:?}",
                    path.display(),
                    ev.root_post
                ));
            }
            reposts_by_post.entry(ev.root_post.clone()).or_default().push(ev);
        }
        for events in reposts_by_post.values_mut() {
            events.sort_by(|a, b| (a.at, a.reposter).cmp(&(b.at, b.reposter)));
        }
    }

    let mut follows = Vec::new();
    if let Some(path) = &args.follows {
        follows = io::read_follows(path)?;
        follows.sort_unstable();
        follows.dedup();
    }

    // Assembly. The author_follower_count column seeds a FollowerCount
    // observation at creation; it goes first so an explicit snapshot at the
    // same instant overrides it.
    let bundles: Vec<RawPostBundle> = posts
        .iter()
        .map(|row| {
            let mut raw = RawPostBundle::new(row.post_id.clone(), row.created_at);
            raw.observations.push(RawObservation {
                post_id: row.post_id.clone(),
                metric: MetricKind::FollowerCount,
                observed_at: row.created_at,
                value: row.author_follower_count,
            });
            if let Some(obs) = obs_by_post.remove(&row.post_id) {
                raw.observations.extend(obs);
            }
            if let Some(events) = notes_by_post.remove(&row.post_id) {
                raw.note_events = events;
            }
            if let Some(texts) = texts_by_post.remove(&row.post_id) {
                raw.note_texts = texts;
            }
            if let Some(labels) = labels_by_post.remove(&row.post_id) {
                raw.labels = labels;
            }
            if let Some(events) = reposts_by_post.get(&row.post_id) {
                raw.repost_events = events.clone();
            }
            raw
        })
        .collect();

    let opts = AssembleOptions::default();
    let assembled: Vec<notefx::Result<PostRecord>> =
        par::map_slice(&bundles, cfg.pipeline.workers, |raw| {
            assemble_post(raw.clone(), None, &opts)
        });

    let mut treated = Vec::new();
    let mut donors = Vec::new();
    for record in assembled {
        let record = record?;
        if record.treated {
            treated.push(record);
        } else {
            donors.push(record);
        }
    }
    let cohort = Cohort::new(treated, donors)?;

    let metrics_present: BTreeSet<&'static str> = cohort
        .treated
        .iter()
        .chain(cohort.donors.iter())
        .flat_map(|p| p.series.keys().map(|m| m.name()))
        .collect();

    let summary = IngestSummary {
        schema_version: SCHEMA_VERSION,
        posts: posts.len(),
        treated: cohort.treated.len(),
        donors: cohort.donors.len(),
        observation_rows,
        note_event_rows,
        label_rows,
        repost_rows,
        follow_edges: follows.len(),
        metrics_present: metrics_present.into_iter().map(String::from).collect(),
    };

    let mut archive = CohortArchive::new(cohort);
    archive.follows = follows;
    archive.repost_events = reposts_by_post;

    io::write_json(&args.out.join("archive.json"), &archive)?;
    io::write_json(&args.out.join("ingest_summary.json"), &summary)?;
    println!(
        "ingested {} posts ({} treated, {} donors) from {} observation rows",
        summary.posts, summary.treated, summary.donors, summary.observation_rows
    );
    Ok(())
}
