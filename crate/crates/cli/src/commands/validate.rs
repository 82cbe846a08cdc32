//! Compares an effect report against simulator ground truth.

use std::path::PathBuf;

use anyhow::Result;

use notefx::report::{build_recovery_report, check_schema, EffectReport};

use crate::commands::simulate::TruthFile;
use crate::config::FileConfig;
use crate::io;

#[derive(Debug, clap::Args)]
pub struct ValidateArgs {
    /// Effect report produced by the effects stage
    #[arg(long)]
    pub report: PathBuf,
    /// Ground truth emitted by simulate
    #[arg(long)]
    pub truth: PathBuf,
    /// Output directory for recovery_report.json
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(args: &ValidateArgs, cfg: &FileConfig) -> Result<()> {
    super::ensure_dir(&args.out)?;
    let report: EffectReport = io::read_json(&args.report)?;
    check_schema(report.schema_version)?;
    let truth: TruthFile = io::read_json(&args.truth)?;
    check_schema(truth.schema_version)?;

    let recovery = build_recovery_report(&report, &truth.truth);
    io::write_json(&args.out.join("recovery_report.json"), &recovery)?;

    for m in &recovery.metrics {
        if !cfg.keeps_metric(m.metric) {
            continue;
        }
        let sign = match m.att_sign_match {
            Some(true) => "sign ok",
            Some(false) => "SIGN MISMATCH",
            None => "sign n/a",
        };
        let est = m
            .estimated_att
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "none".into());
        let tru = m
            .true_att
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "none".into());
        println!(
            "{}: est att@48h={est} true={tru} ({sign})",
            m.metric.name()
        );
    }
    Ok(())
}
