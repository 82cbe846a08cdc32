//! Generates a synthetic cohort with known effects and emits it both as an
//! assembled archive and as the raw CSV corpus the ingest command reads, so
//! the whole pipeline can be validated end to end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use notefx::cascade::RepostEvent;
use notefx::model::{MetricKind, PostRecord};
use notefx::report::{CohortArchive, SCHEMA_VERSION};
use notefx::sim::{simulate_cohort, GroundTruth, SimOutput};
use notefx::time::GRID_STEP_MS;

use crate::config::FileConfig;
use crate::io::{self, num, CsvOut};

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Override the simulation seed from the config file
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the CSV corpus, archive.json, ground_truth.json
    #[arg(long, short)]
    pub out: PathBuf,
}

/// On-disk wrapper so the truth file is self-describing.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub schema_version: u32,
    pub truth: GroundTruth,
}

pub fn run(args: &SimulateArgs, cfg: &FileConfig) -> Result<()> {
    super::ensure_dir(&args.out)?;
    let mut sim_cfg = cfg.sim.clone();
    if let Some(seed) = args.seed {
        sim_cfg.seed = seed;
    }

    let output = simulate_cohort(&sim_cfg, cfg.pipeline.workers)?;

    let mut by_post: BTreeMap<String, Vec<RepostEvent>> = BTreeMap::new();
    for ev in &output.repost_events {
        by_post.entry(ev.root_post.clone()).or_default().push(ev.clone());
    }
    for events in by_post.values_mut() {
        events.sort_by(|a, b| (a.at, a.reposter).cmp(&(b.at, b.reposter)));
    }

    write_posts_csv(&args.out.join("posts.csv"), &output)?;
    write_observations_csv(&args.out.join("observations.csv"), &output, &sim_cfg)?;
    write_note_events_csv(&args.out.join("note_events.csv"), &output)?;
    write_labels_csv(&args.out.join("labels.csv"), &output)?;
    write_reposts_csv(&args.out.join("reposts.csv"), &by_post)?;
    write_follows_csv(&args.out.join("follows.csv"), &output)?;

    let truth_file = TruthFile {
        schema_version: SCHEMA_VERSION,
        truth: output.truth,
    };
    io::write_json(&args.out.join("ground_truth.json"), &truth_file)?;

    let mut archive = CohortArchive::new(output.cohort);
    archive.follows = output.graph.edges();
    archive.repost_events = by_post;
    io::write_json(&args.out.join("archive.json"), &archive)?;

    println!(
        "simulated {} treated and {} donor posts (seed {})",
        archive.cohort.treated.len(),
        archive.cohort.donors.len(),
        sim_cfg.seed
    );
    Ok(())
}

fn posts_sorted(output: &SimOutput) -> Vec<&PostRecord> {
    let mut posts: Vec<&PostRecord> = output
        .cohort
        .treated
        .iter()
        .chain(output.cohort.donors.iter())
        .collect();
    posts.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    posts
}

fn write_posts_csv(path: &Path, output: &SimOutput) -> Result<()> {
    let mut csv = CsvOut::create(path, &["post_id", "created_at", "author_follower_count"])?;
    for post in posts_sorted(output) {
        let followers = post
            .series
            .get(&MetricKind::FollowerCount)
            .and_then(|s| s.value_at_step(0))
            .unwrap_or(0.0);
        csv.row(&[
            post.post_id.clone(),
            post.created_at.to_iso(),
            num(followers),
        ])?;
    }
    csv.finish()
}

/// Emits engagement snapshots at the configured cadence. Values come from the
/// assembled series; because the cadence is a multiple of the grid step, the
/// aligned series passes exactly through every emitted point and re-ingestion
/// reproduces the archive byte for byte.
fn write_observations_csv(
    path: &Path,
    output: &SimOutput,
    sim_cfg: &notefx::sim::SimConfig,
) -> Result<()> {
    let mut csv = CsvOut::create(path, &["post_id", "metric", "observed_at", "value"])?;
    let ages: Vec<i64> = (0..=sim_cfg.horizon_ms / sim_cfg.obs_step_ms)
        .map(|k| k * sim_cfg.obs_step_ms)
        .collect();
    for post in posts_sorted(output) {
        for metric in [
            MetricKind::Views,
            MetricKind::Likes,
            MetricKind::Replies,
            MetricKind::Reposts,
        ] {
            let Some(series) = post.series.get(&metric) else {
                continue;
            };
            for &age in &ages {
                let Some(value) = series.value_at_step(age / GRID_STEP_MS) else {
                    continue;
                };
                csv.row(&[
                    post.post_id.clone(),
                    metric.name().to_string(),
                    post.created_at.saturating_add_ms(age).to_iso(),
                    num(value),
                ])?;
            }
        }
        if let Some(series) = post.series.get(&MetricKind::FollowerCount) {
            for age in [0, sim_cfg.horizon_ms] {
                let Some(value) = series.value_at_step(age / GRID_STEP_MS) else {
                    continue;
                };
                csv.row(&[
                    post.post_id.clone(),
                    MetricKind::FollowerCount.name().to_string(),
                    post.created_at.saturating_add_ms(age).to_iso(),
                    num(value),
                ])?;
            }
        }
    }
    csv.finish()
}

fn write_note_events_csv(path: &Path, output: &SimOutput) -> Result<()> {
    let mut csv = CsvOut::create(
        path,
        &["post_id", "note_id", "status", "at", "note_text_ref"],
    )?;
    let mut events = output.note_events.clone();
    events.sort_by(|a, b| {
        (&a.post_id, a.at, &a.note_id).cmp(&(&b.post_id, b.at, &b.note_id))
    });
    for ev in &events {
        csv.row(&[
            ev.post_id.clone(),
            ev.note_id.clone(),
            ev.status.name().to_string(),
            ev.at.to_iso(),
            String::new(),
        ])?;
    }
    csv.finish()
}

fn write_labels_csv(path: &Path, output: &SimOutput) -> Result<()> {
    let mut csv = CsvOut::create(path, &["post_id", "key", "value"])?;
    for post in posts_sorted(output) {
        if let Some(p) = &post.labels.partisanship {
            csv.row(&[post.post_id.clone(), "partisanship".into(), p.clone()])?;
        }
        if let Some(m) = &post.labels.media_type {
            csv.row(&[post.post_id.clone(), "media_type".into(), m.clone()])?;
        }
        for c in &post.labels.accuracy_concerns {
            csv.row(&[post.post_id.clone(), "accuracy_concern".into(), c.clone()])?;
        }
    }
    csv.finish()
}

fn write_reposts_csv(path: &Path, by_post: &BTreeMap<String, Vec<RepostEvent>>) -> Result<()> {
    let mut csv = CsvOut::create(path, &["root_post_id", "reposter_id", "at"])?;
    for events in by_post.values() {
        for ev in events {
            csv.row(&[
                ev.root_post.clone(),
                ev.reposter.to_string(),
                ev.at.to_iso(),
            ])?;
        }
    }
    csv.finish()
}

fn write_follows_csv(path: &Path, output: &SimOutput) -> Result<()> {
    let mut csv = CsvOut::create(path, &["follower_id", "followee_id"])?;
    for (follower, followee) in output.graph.edges() {
        csv.row(&[follower.to_string(), followee.to_string()])?;
    }
    csv.finish()
}
