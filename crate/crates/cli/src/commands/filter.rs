//! Applies eligibility rules to an archive, recording every exclusion.

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::Result;

use notefx::model::eligibility::filter_cohort;
use notefx::report::build_exclusion_report;

use crate::config::FileConfig;
use crate::io;

#[derive(Debug, clap::Args)]
pub struct FilterArgs {
    /// Cohort archive produced by ingest or a previous stage
    #[arg(long)]
    pub archive: PathBuf,
    /// Output directory for archive.json and exclusion_report.json
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &FilterArgs, cfg: &FileConfig) -> Result<()> {
    super::ensure_dir(&args.out)?;
    let mut archive = super::load_archive(&args.archive)?;

    let before_treated = archive.cohort.treated.len();
    let before_donors = archive.cohort.donors.len();
    let (cohort, exclusions) = filter_cohort(archive.cohort, &cfg.filter);
    archive.cohort = cohort;
    archive.exclusions.extend(exclusions);

    let surviving: BTreeSet<&str> = archive
        .cohort
        .treated
        .iter()
        .chain(archive.cohort.donors.iter())
        .map(|p| p.post_id.as_str())
        .collect();
    archive
        .repost_events
        .retain(|post_id, _| surviving.contains(post_id.as_str()));

    let report = build_exclusion_report(archive.exclusions.clone());
    io::write_json(&args.out.join("archive.json"), &archive)?;
    io::write_json(&args.out.join("exclusion_report.json"), &report)?;

    println!(
        "filter kept {}/{before_treated} treated and {}/{before_donors} donors ({} exclusions total)",
        archive.cohort.treated.len(),
        archive.cohort.donors.len(),
        report.total
    );
    if archive.cohort.treated.is_empty() {
        eprintln!("warning: no treated posts survived filtering");
    }
    Ok(())
}
