//! Backdating falsification check: refits with treatment shifted earlier and
//! asks whether the estimated effect at the true treatment time covers zero.

use std::path::PathBuf;

use anyhow::Result;

use notefx::pipeline::run_placebo;
use notefx::report::build_placebo_report;
use notefx::Error;

use crate::config::FileConfig;
use crate::io;

#[derive(Debug, clap::Args)]
pub struct PlaceboArgs {
    /// Filtered cohort archive
    #[arg(long)]
    pub archive: PathBuf,
    /// Output directory for placebo_report.json
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &PlaceboArgs, cfg: &FileConfig) -> Result<()> {
    super::ensure_dir(&args.out)?;
    let archive = super::load_archive(&args.archive)?;
    if archive.cohort.treated.is_empty() {
        return Err(Error::Infeasible("no treated posts for the placebo".into()).into());
    }

    let run = run_placebo(&archive.cohort, &cfg.placebo, &cfg.pipeline)?;
    let report = build_placebo_report(&run, cfg.placebo.backdate_ms, &cfg.pipeline.effects);
    io::write_json(&args.out.join("placebo_report.json"), &report)?;

    let mut passed = 0usize;
    let mut judged = 0usize;
    for row in &report.rows {
        if !cfg.keeps_metric(row.metric) {
            continue;
        }
        let verdict = match row.covers_zero {
            Some(true) => {
                judged += 1;
                passed += 1;
                "PASS"
            }
            Some(false) => {
                judged += 1;
                "FAIL"
            }
            None => "SKIP (n<2)",
        };
        println!(
            "placebo {}: att={:.4} ci=[{}] n={} -> {verdict}",
            row.metric.name(),
            row.att.att,
            crate::commands::effects::fmt_ci(row.att.ci_low, row.att.ci_high),
            row.att.n
        );
    }
    println!(
        "placebo summary: {passed}/{judged} metrics cover zero at t={} ({} posts refit)",
        report.report_step, report.n_fitted
    );
    Ok(())
}
