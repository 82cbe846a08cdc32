//! Growth-matched structure comparison.
//!
//! Whether cascades that grew by the same amount grew *differently* in shape:
//! posts are binned by their within-window change in cascade size
//! (log-spaced bins over the positive changes, pooled across arms), and the
//! mean change of a structure metric (depth, breadth, virality) is compared
//! between the treated arm and the synthetic control arm inside each bin.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Treated,
    Control,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GrowthObservation {
    pub arm: Arm,
    /// Change in cascade size (reposts) over the effect window.
    pub delta_size: f64,
    /// Change in the structure metric over the same window.
    pub delta_structure: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthBin {
    pub lo: f64,
    pub hi: f64,
    pub treated_n: usize,
    pub control_n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub treated_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub control_mean: Option<f64>,
}

impl GrowthBin {
    /// Populated = both arms present.
    pub fn populated(&self) -> bool {
        self.treated_n > 0 && self.control_n > 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthMatched {
    pub bins: Vec<GrowthBin>,
    /// Observations with non-positive size change, excluded from binning.
    pub excluded_nonpositive: usize,
}

/// Bins observations by size change and averages structure change per arm.
/// Bin edges are log-spaced between the smallest and largest positive size
/// change, pooled over both arms; membership is `[lo, hi)` with the last bin
/// closed.
pub fn growth_matched_bins(
    observations: &[GrowthObservation],
    bin_count: usize,
) -> Result<GrowthMatched> {
    if bin_count == 0 {
        return Err(Error::InvalidConfig("bin_count must be positive".into()));
    }
    let kept: Vec<&GrowthObservation> = observations
        .iter()
        .filter(|o| o.delta_size > 0.0 && o.delta_size.is_finite())
        .collect();
    let excluded_nonpositive = observations.len() - kept.len();
    if kept.is_empty() {
        return Ok(GrowthMatched {
            bins: Vec::new(),
            excluded_nonpositive,
        });
    }

    let lo = kept.iter().map(|o| o.delta_size).fold(f64::INFINITY, f64::min);
    let hi = kept.iter().map(|o| o.delta_size).fold(0.0f64, f64::max);
    let (edges, bins) = if lo == hi {
        (vec![lo, hi], 1)
    } else {
        let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
        let edges = (0..=bin_count)
            .map(|i| (ln_lo + (ln_hi - ln_lo) * i as f64 / bin_count as f64).exp())
            .collect();
        (edges, bin_count)
    };

    let mut acc: Vec<(usize, f64, usize, f64)> = vec![(0, 0.0, 0, 0.0); bins];
    for o in &kept {
        let mut idx = bins - 1;
        for i in 0..bins {
            if o.delta_size < edges[i + 1] {
                idx = i;
                break;
            }
        }
        let slot = &mut acc[idx];
        match o.arm {
            Arm::Treated => {
                slot.0 += 1;
                slot.1 += o.delta_structure;
            }
            Arm::Control => {
                slot.2 += 1;
                slot.3 += o.delta_structure;
            }
        }
    }

    let bins = acc
        .into_iter()
        .enumerate()
        .map(|(i, (tn, ts, cn, cs))| GrowthBin {
            lo: edges[i],
            hi: edges[i + 1],
            treated_n: tn,
            control_n: cn,
            treated_mean: (tn > 0).then(|| ts / tn as f64),
            control_mean: (cn > 0).then(|| cs / cn as f64),
        })
        .collect();
    Ok(GrowthMatched {
        bins,
        excluded_nonpositive,
    })
}
