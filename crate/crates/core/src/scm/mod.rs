//! Synthetic control fitting for one treated post: donor selection, weight
//! optimization, bias-corrected individual treatment effects.

pub mod bias;
pub mod donors;
pub mod scales;
pub mod solver;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{MetricKind, PostId, PostRecord};
use crate::time::POST_WINDOW_STEPS;
use crate::{Error, Result};

pub use bias::{BiasModel, BiasOptions, FeatureSpec};
pub use donors::{match_spec, select_donors, standardized_pre_vector, DonorSelection, MatchSpec};
pub use scales::{compute_scales, Scales};
pub use solver::{fit_weights, project_simplex, SolverOptions, WeightFit};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScmConfig {
    /// Nearest donors entering the program, by standardized pre distance.
    pub donor_pool_size: usize,
    pub solver: SolverOptions,
    pub bias: BiasOptions,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            donor_pool_size: 1000,
            solver: SolverOptions::default(),
            bias: BiasOptions::default(),
        }
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.donor_pool_size < 2 {
            return Err(Error::InvalidConfig(
                "donor_pool_size must be at least 2".into(),
            ));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(Error::InvalidConfig("solver tol must be in (0, 1)".into()));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::InvalidConfig("solver max_iter must be positive".into()));
        }
        if self.bias.ridge_scale < 0.0 || self.bias.condition_limit <= 1.0 {
            return Err(Error::InvalidConfig("bias options out of range".into()));
        }
        Ok(())
    }
}

/// Per-metric effect trajectory for one treated post. Index t counts grid
/// steps from the treatment step, 0..=192.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IteSeries {
    pub metric: MetricKind,
    /// Observed (treated) values.
    pub y1: Vec<f64>,
    /// Raw synthetic control: weighted donor combination.
    pub y0_synth: Vec<f64>,
    /// Bias-corrected effect estimates; equals y1 - y0_synth when the
    /// correction is disabled.
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Donors covering the matched ages, before the nearest-k cut.
    pub donors_covering: usize,
    pub donors_used: usize,
    pub pre_rmse: f64,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Iteration cap hit with a gap far above tolerance.
    pub low_quality: bool,
    pub ridge: f64,
    pub bias_disabled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PostFit {
    pub treated_id: PostId,
    pub a_step: i64,
    pub treatment_age_ms: i64,
    pub matched_metrics: Vec<MetricKind>,
    /// Donor weights in selection order; reported sparsely by the pipeline.
    pub weights: Vec<(PostId, f64)>,
    pub ite: BTreeMap<MetricKind, IteSeries>,
    pub diagnostics: FitDiagnostics,
    /// Present only when `BiasOptions::emit_model` is set.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bias_model: Option<BiasModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted(Box<PostFit>),
    Infeasible { treated_id: PostId, reason: String },
}

impl FitOutcome {
    pub fn treated_id(&self) -> &str {
        match self {
            FitOutcome::Fitted(f) => &f.treated_id,
            FitOutcome::Infeasible { treated_id, .. } => treated_id,
        }
    }

    pub fn as_fitted(&self) -> Option<&PostFit> {
        match self {
            FitOutcome::Fitted(f) => Some(f),
            FitOutcome::Infeasible { .. } => None,
        }
    }
}

/// Runs the full per-post estimation. Infeasibility (no matchable metric,
/// fewer than two covering donors) is a reportable outcome, not an error;
/// errors are reserved for malformed inputs.
pub fn fit_treated_post(
    treated: &PostRecord,
    donors: &[PostRecord],
    scales: &Scales,
    config: &ScmConfig,
) -> FitOutcome {
    match try_fit(treated, donors, scales, config) {
        Ok(fit) => FitOutcome::Fitted(Box::new(fit)),
        Err(Error::Infeasible(reason)) => FitOutcome::Infeasible {
            treated_id: treated.post_id.clone(),
            reason,
        },
        Err(other) => FitOutcome::Infeasible {
            treated_id: treated.post_id.clone(),
            reason: other.to_string(),
        },
    }
}

fn try_fit(
    treated: &PostRecord,
    donors: &[PostRecord],
    scales: &Scales,
    config: &ScmConfig,
) -> Result<PostFit> {
    let spec = match_spec(treated, scales)?;
    let selection = select_donors(treated, donors, &spec, scales, config.donor_pool_size)?;

    let donor_by_id: BTreeMap<&str, &PostRecord> =
        donors.iter().map(|d| (d.post_id.as_str(), d)).collect();
    let pool: Vec<&PostRecord> = selection
        .donor_ids
        .iter()
        .map(|id| donor_by_id[id.as_str()])
        .collect();

    let y = standardized_pre_vector(treated, &spec, scales);
    let x: Vec<Vec<f64>> = pool
        .iter()
        .map(|d| standardized_pre_vector(d, &spec, scales))
        .collect();
    let fit = fit_weights(&x, &y, &config.solver)?;
    let low_quality =
        !fit.converged && fit.gap > 10.0 * config.solver.tol * (1.0 + fit.objective);

    let feature_spec = FeatureSpec::from_match_spec(&spec);
    let donor_features: Vec<Vec<f64>> = pool
        .iter()
        .map(|d| feature_spec.extract(d, scales))
        .collect::<Result<_>>()?;
    let treated_features = feature_spec.extract(treated, scales)?;
    let model = bias::fit_bias_model(
        &donor_features,
        feature_spec,
        &spec.metrics,
        |j, metric, t| {
            pool[j].series[&metric]
                .value_at_step(spec.a_step + t)
                .expect("screened donor covers the post window")
        },
        &config.bias,
    );

    // synthetic feature vector: weighted donor features; with sum-to-one
    // weights the intercept passes through, so predicting at this point
    // equals the weighted donor prediction
    let width = treated_features.len();
    let mut synth_features = vec![0.0; width];
    for (j, f) in donor_features.iter().enumerate() {
        let w = fit.weights[j];
        if w != 0.0 {
            for (acc, v) in synth_features.iter_mut().zip(f) {
                *acc += w * v;
            }
        }
    }

    let mut ite = BTreeMap::new();
    for metric in &spec.metrics {
        let ts = &treated.series[metric];
        let horizon = POST_WINDOW_STEPS as usize;
        let mut y1 = Vec::with_capacity(horizon + 1);
        let mut y0 = Vec::with_capacity(horizon + 1);
        let mut tau = Vec::with_capacity(horizon + 1);
        for t in 0..=POST_WINDOW_STEPS {
            let step = spec.a_step + t;
            let obs = ts.value_at_step(step).expect("matched metric covers window");
            let synth: f64 = pool
                .iter()
                .enumerate()
                .map(|(j, d)| fit.weights[j] * d.series[metric].value_at_step(step).unwrap())
                .sum();
            let raw = obs - synth;
            let correction = match (
                model.predict(&treated_features, *metric, t as usize),
                model.predict(&synth_features, *metric, t as usize),
            ) {
                (Some(mu_i), Some(mu_s)) => mu_i - mu_s,
                _ => 0.0,
            };
            y1.push(obs);
            y0.push(synth);
            tau.push(raw - correction);
        }
        ite.insert(
            *metric,
            IteSeries {
                metric: *metric,
                y1,
                y0_synth: y0,
                tau,
            },
        );
    }

    let weights = selection
        .donor_ids
        .iter()
        .cloned()
        .zip(fit.weights.iter().copied())
        .collect();

    Ok(PostFit {
        treated_id: treated.post_id.clone(),
        a_step: spec.a_step,
        treatment_age_ms: treated.treatment_age_ms().unwrap(),
        matched_metrics: spec.metrics.clone(),
        weights,
        ite,
        diagnostics: FitDiagnostics {
            donors_covering: donors.len() - selection.screened_out,
            donors_used: selection.donor_ids.len(),
            pre_rmse: fit.objective.sqrt(),
            objective: fit.objective,
            gap: fit.gap,
            iterations: fit.iterations,
            converged: fit.converged,
            low_quality,
            ridge: model.ridge,
            bias_disabled: model.disabled,
        },
        bias_model: config.bias.emit_model.then_some(model),
    })
}
