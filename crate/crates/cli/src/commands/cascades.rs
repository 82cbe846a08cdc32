//! Derives cascade structure series (depth, breadth, virality) from the
//! archived repost log and follow graph.

use std::path::PathBuf;

use anyhow::Result;

use notefx::cascade::FollowEdgeSet;
use notefx::ingest::{attach_cascade_series, AssembleOptions};
use notefx::model::{Cohort, PostRecord};
use notefx::par;

use crate::config::FileConfig;
use crate::io;

#[derive(Debug, clap::Args)]
pub struct CascadesArgs {
    /// Cohort archive with repost events and follow edges
    #[arg(long)]
    pub archive: PathBuf,
    /// Output directory for the augmented archive.json
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &CascadesArgs, cfg: &FileConfig) -> Result<()> {
    super::ensure_dir(&args.out)?;
    let mut archive = super::load_archive(&args.archive)?;

    let graph = FollowEdgeSet::from_edges(archive.follows.iter().copied());
    let opts = AssembleOptions::default();
    let events = &archive.repost_events;

    let augment = |post: &PostRecord| -> notefx::Result<PostRecord> {
        let mut post = post.clone();
        if let Some(evs) = events.get(&post.post_id) {
            attach_cascade_series(&mut post, evs, &graph, &opts)?;
        }
        Ok(post)
    };

    let workers = cfg.pipeline.workers;
    let treated: notefx::Result<Vec<PostRecord>> =
        par::map_slice(&archive.cohort.treated, workers, augment)
            .into_iter()
            .collect();
    let donors: notefx::Result<Vec<PostRecord>> =
        par::map_slice(&archive.cohort.donors, workers, augment)
            .into_iter()
            .collect();
    archive.cohort = Cohort::new(treated?, donors?)?;

    let with_structure = archive
        .cohort
        .treated
        .iter()
        .chain(archive.cohort.donors.iter())
        .filter(|p| {
            p.series
                .contains_key(&notefx::model::MetricKind::CascadeMaxDepth)
        })
        .count();

    io::write_json(&args.out.join("archive.json"), &archive)?;
    println!(
        "cascade series attached to {with_structure} posts ({} with repost events)",
        archive.repost_events.len()
    );
    Ok(())
}
