//! Aggregates per-post fits into the effect report and its flat CSV views.

use std::path::PathBuf;

use anyhow::Result;

use notefx::pipeline::FitBatch;
use notefx::report::{build_effect_report, check_schema, EffectReport, FitArtifact};
use notefx::time::POST_WINDOW_STEPS;
use notefx::Error;

use crate::config::FileConfig;
use crate::io::{self, num, opt_num, CsvOut};

#[derive(Debug, clap::Args)]
pub struct EffectsArgs {
    /// Filtered cohort archive the fits were computed on
    #[arg(long)]
    pub archive: PathBuf,
    /// Fit artifact from the fit stage
    #[arg(long)]
    pub fits: PathBuf,
    /// Output directory for effect_report.json and CSV views
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &EffectsArgs, cfg: &FileConfig) -> Result<()> {
    super::ensure_dir(&args.out)?;
    let archive = super::load_archive(&args.archive)?;
    let artifact: FitArtifact = io::read_json(&args.fits)?;
    check_schema(artifact.schema_version)?;

    let batch = FitBatch {
        scales: artifact.scales.clone(),
        outcomes: artifact.outcomes,
    };
    if batch.fitted().is_empty() {
        return Err(Error::Infeasible("no fitted posts to aggregate".into()).into());
    }

    let mut report = build_effect_report(
        &archive.cohort,
        &batch,
        &cfg.pipeline.effects,
        cfg.pipeline.growth_bins,
    )?;
    restrict(&mut report, cfg);

    write_att_curves(&args.out.join("att_curves.csv"), &report)?;
    write_strata(&args.out.join("strata_effects.csv"), &report)?;
    write_positive_share(&args.out.join("positive_share.csv"), &report)?;
    write_growth_bins(&args.out.join("growth_bins.csv"), &report)?;
    write_ite_horizon(&args.out.join("ite_horizon.csv"), &batch, cfg)?;
    io::write_json(&args.out.join("effect_report.json"), &report)?;

    for m in &report.metrics {
        let Some(at) = m.att.last() else { continue };
        let pct = m
            .percent_change_total
            .map(|p| format!(", total {:+.1}%", p * 100.0))
            .unwrap_or_default();
        println!(
            "{}: att@48h={:.3} (95% CI {}, n={}){pct}",
            m.metric.name(),
            at.att,
            fmt_ci(at.ci_low, at.ci_high),
            at.n
        );
    }
    Ok(())
}

pub(crate) fn fmt_ci(lo: Option<f64>, hi: Option<f64>) -> String {
    match (lo, hi) {
        (Some(lo), Some(hi)) => format!("{lo:.3}..{hi:.3}"),
        _ => "n/a".into(),
    }
}

/// Drops metrics/strata the run configuration excludes. Selection is applied
/// at emission so a stored fit artifact can serve any report slice.
fn restrict(report: &mut EffectReport, cfg: &FileConfig) {
    report.metrics.retain(|m| cfg.keeps_metric(m.metric));
    report
        .strata
        .retain(|s| cfg.keeps_metric(s.metric) && cfg.keeps_stratum(&s.key));
    report.growth.retain(|g| cfg.keeps_metric(g.structure_metric));
}

fn write_att_curves(path: &PathBuf, report: &EffectReport) -> Result<()> {
    let mut csv = CsvOut::create(
        path,
        &["metric", "t", "n", "att", "se", "ci_low", "ci_high", "mean_y1", "mean_y0"],
    )?;
    for m in &report.metrics {
        for (t, p) in m.att.iter().enumerate() {
            csv.row(&[
                m.metric.name().to_string(),
                t.to_string(),
                p.n.to_string(),
                num(p.att),
                opt_num(p.se),
                opt_num(p.ci_low),
                opt_num(p.ci_high),
                num(p.mean_y1),
                num(p.mean_y0),
            ])?;
        }
    }
    csv.finish()
}

fn write_strata(path: &PathBuf, report: &EffectReport) -> Result<()> {
    let mut csv = CsvOut::create(
        path,
        &[
            "key",
            "label",
            "metric",
            "n",
            "att",
            "se",
            "ci_low",
            "ci_high",
            "percent_change_total",
            "percent_change_growth",
        ],
    )?;
    for s in &report.strata {
        let p = &s.at_horizon;
        csv.row(&[
            s.key.clone(),
            s.label.clone(),
            s.metric.name().to_string(),
            p.n.to_string(),
            num(p.att),
            opt_num(p.se),
            opt_num(p.ci_low),
            opt_num(p.ci_high),
            opt_num(s.percent_change_total),
            opt_num(s.percent_change_growth),
        ])?;
    }
    csv.finish()
}

fn write_positive_share(path: &PathBuf, report: &EffectReport) -> Result<()> {
    let mut csv = CsvOut::create(path, &["metric", "n", "share", "ci_low", "ci_high"])?;
    for m in &report.metrics {
        let Some(share) = &m.positive_tau_share else {
            continue;
        };
        csv.row(&[
            m.metric.name().to_string(),
            share.n.to_string(),
            num(share.share),
            num(share.ci_low),
            num(share.ci_high),
        ])?;
    }
    csv.finish()
}

fn write_growth_bins(path: &PathBuf, report: &EffectReport) -> Result<()> {
    let mut csv = CsvOut::create(
        path,
        &[
            "structure_metric",
            "lo",
            "hi",
            "treated_n",
            "control_n",
            "treated_mean",
            "control_mean",
        ],
    )?;
    for section in &report.growth {
        for bin in &section.matched.bins {
            csv.row(&[
                section.structure_metric.name().to_string(),
                num(bin.lo),
                num(bin.hi),
                bin.treated_n.to_string(),
                bin.control_n.to_string(),
                opt_num(bin.treated_mean),
                opt_num(bin.control_mean),
            ])?;
        }
    }
    csv.finish()
}

fn write_ite_horizon(path: &PathBuf, batch: &FitBatch, cfg: &FileConfig) -> Result<()> {
    let mut csv = CsvOut::create(
        path,
        &["post_id", "metric", "a_step", "tau", "y1", "y0_synth"],
    )?;
    let t = POST_WINDOW_STEPS as usize;
    for fit in batch.fitted() {
        for (metric, series) in &fit.ite {
            if !cfg.keeps_metric(*metric) {
                continue;
            }
            let (Some(tau), Some(y1), Some(y0)) =
                (series.tau.get(t), series.y1.get(t), series.y0_synth.get(t))
            else {
                continue;
            };
            csv.row(&[
                fit.treated_id.clone(),
                metric.name().to_string(),
                fit.a_step.to_string(),
                num(*tau),
                num(*y1),
                num(*y0),
            ])?;
        }
    }
    csv.finish()
}
