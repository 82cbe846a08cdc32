//! Fits a synthetic control per treated post and writes the weight artifact.

use std::path::PathBuf;

use anyhow::Result;

use notefx::pipeline::run_fits;
use notefx::report::FitArtifact;
use notefx::scm::FitOutcome;
use notefx::Error;

use crate::config::FileConfig;
use crate::io::{self, num, CsvOut};

#[derive(Debug, clap::Args)]
pub struct FitArgs {
    /// Filtered cohort archive
    #[arg(long)]
    pub archive: PathBuf,
    /// Output directory for fits.json and fit_summary.csv
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &FitArgs, cfg: &FileConfig) -> Result<()> {
    super::ensure_dir(&args.out)?;
    let archive = super::load_archive(&args.archive)?;

    if archive.cohort.treated.is_empty() {
        return Err(Error::Infeasible("no treated posts to fit".into()).into());
    }
    if archive.cohort.donors.is_empty() {
        return Err(Error::Infeasible("donor pool is empty".into()).into());
    }

    let batch = run_fits(&archive.cohort, &cfg.pipeline)?;
    let artifact = FitArtifact::from_batch(&batch, &cfg.pipeline.scm);

    let mut csv = CsvOut::create(
        &args.out.join("fit_summary.csv"),
        &[
            "post_id",
            "status",
            "a_step",
            "matched_metrics",
            "donors_used",
            "pre_rmse",
            "objective",
            "gap",
            "iterations",
            "converged",
            "low_quality",
            "detail",
        ],
    )?;
    for outcome in &artifact.outcomes {
        let row: Vec<String> = match outcome {
            FitOutcome::Fitted(fit) => {
                let metrics: Vec<&str> = fit.matched_metrics.iter().map(|m| m.name()).collect();
                let d = &fit.diagnostics;
                vec![
                    fit.treated_id.clone(),
                    "fitted".into(),
                    fit.a_step.to_string(),
                    metrics.join(";"),
                    d.donors_used.to_string(),
                    num(d.pre_rmse),
                    num(d.objective),
                    num(d.gap),
                    d.iterations.to_string(),
                    d.converged.to_string(),
                    d.low_quality.to_string(),
                    String::new(),
                ]
            }
            FitOutcome::Infeasible { treated_id, reason } => {
                let mut row = vec![treated_id.clone(), "infeasible".into()];
                row.extend(std::iter::repeat_with(String::new).take(9));
                row.push(reason.clone());
                row
            }
        };
        csv.row(&row)?;
    }
    csv.finish()?;
    io::write_json(&args.out.join("fits.json"), &artifact)?;

    let fitted = artifact.fitted().len();
    println!(
        "fitted {fitted}/{} treated posts ({} infeasible)",
        artifact.outcomes.len(),
        artifact.outcomes.len() - fitted
    );
    Ok(())
}
