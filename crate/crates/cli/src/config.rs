//! Run configuration: a TOML file can override any pipeline field; the
//! worker count resolves flag > file > NOTEFX_WORKERS > auto.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use notefx::effects::strata::StratumKey;
use notefx::model::eligibility::FilterRules;
use notefx::model::MetricKind;
use notefx::pipeline::PipelineConfig;
use notefx::placebo::PlaceboConfig;
use notefx::sim::SimConfig;
use notefx::time::{GRID_STEP_MS, POST_WINDOW_STEPS};

pub const WORKERS_ENV: &str = "NOTEFX_WORKERS";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub pipeline: PipelineConfig,
    pub filter: FilterRules,
    pub placebo: PlaceboConfig,
    pub sim: SimConfig,
    /// Restrict reports and plot data to these metrics (empty = all).
    pub metrics: Vec<String>,
    /// Restrict stratified reporting to these keys (empty = all).
    pub strata_keys: Vec<String>,
    /// Exposed for auditability; this build supports only the 15-minute
    /// grid and the 192-step (48h) effect window.
    pub grid_step_ms: i64,
    pub horizon_steps: i64,
    /// Worker threads; overridden by --workers, defaulted by NOTEFX_WORKERS.
    pub workers: Option<usize>,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            pipeline: PipelineConfig::default(),
            filter: FilterRules::default(),
            placebo: PlaceboConfig::default(),
            sim: SimConfig::default(),
            metrics: Vec::new(),
            strata_keys: Vec::new(),
            grid_step_ms: GRID_STEP_MS,
            horizon_steps: POST_WINDOW_STEPS,
            workers: None,
        }
    }
}

impl FileConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_step_ms != GRID_STEP_MS {
            bail!("unsupported grid_step_ms {} (this build fixes the grid at {GRID_STEP_MS} ms)", self.grid_step_ms);
        }
        if self.horizon_steps != POST_WINDOW_STEPS {
            bail!("unsupported horizon_steps {} (this build fixes the effect window at {POST_WINDOW_STEPS} steps)", self.horizon_steps);
        }
        for m in &self.metrics {
            if MetricKind::parse(m).is_none() {
                bail!("unknown metric {m:?} in config");
            }
        }
        for k in &self.strata_keys {
            if !StratumKey::ALL.iter().any(|s| s.name() == k) {
                bail!("unknown stratum key {k:?} in config");
            }
        }
        Ok(())
    }

    /// Parsed metric selection; None = no restriction.
    pub fn metric_filter(&self) -> Option<Vec<MetricKind>> {
        if self.metrics.is_empty() {
            None
        } else {
            Some(self.metrics.iter().filter_map(|m| MetricKind::parse(m)).collect())
        }
    }

    pub fn keeps_metric(&self, metric: MetricKind) -> bool {
        match self.metric_filter() {
            None => true,
            Some(keep) => keep.contains(&metric),
        }
    }

    pub fn keeps_stratum(&self, key_name: &str) -> bool {
        self.strata_keys.is_empty() || self.strata_keys.iter().any(|k| k == key_name)
    }
}

/// Loads the config file (if any) and resolves the worker count.
pub fn load(path: Option<&Path>, workers_flag: Option<usize>) -> Result<FileConfig> {
    let mut cfg = match path {
        None => FileConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
    };
    cfg.validate()?;

    let env_workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(
            v.parse::<usize>()
                .with_context(|| format!("{WORKERS_ENV} must be a non-negative integer, got {v:?}"))?,
        ),
        Err(_) => None,
    };
    cfg.pipeline.workers = workers_flag.or(cfg.workers).or(env_workers).unwrap_or(0);
    Ok(cfg)
}
