//! Rank-derived matcher weights.
//!
//! Each probe contributes a weight from the rank at which a matcher places
//! the probe's true identity in the gallery. Per-matcher weights are the
//! probe means, normalized to sum to one, then rescaled onto `[w_opt, 1]`
//! and normalized again.

use alloc::vec::Vec;

use super::score::FusionWeights;
use crate::error::{Error, Result};
use crate::math::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RankVariant {
    /// `w = 1 - (r - 1) / |R|`
    RankOpt,
    /// `w = 1` at rank 1, otherwise 0.
    Rank1Opt,
}

impl RankVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RankOpt => "rank_opt",
            Self::Rank1Opt => "rank1_opt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RankFusionConfig {
    pub variant: RankVariant,
    pub w_opt: f64,
}

impl RankFusionConfig {
    pub fn new(variant: RankVariant, w_opt: f64) -> Result<Self> {
        if !(w_opt > 0.0 && w_opt <= 1.0) {
            bail!(InvalidArgument, "w_opt must lie in (0, 1], got {w_opt}");
        }
        Ok(Self { variant, w_opt })
    }
}

/// Weight of one probe whose true identity sits at (possibly fractional,
/// tie-averaged) rank `rank` in a gallery of `gallery_size`.
pub fn rank_probe_weight(rank: f64, gallery_size: usize, variant: RankVariant) -> Result<f64> {
    if gallery_size == 0 || !(rank >= 1.0 && rank <= gallery_size as f64) {
        bail!(InvalidArgument, "rank {rank} outside 1..={gallery_size}");
    }
    Ok(match variant {
        RankVariant::RankOpt => (gallery_size as f64 - (rank - 1.0)) / gallery_size as f64,
        RankVariant::Rank1Opt => {
            if rank == 1.0 {
                1.0
            } else {
                0.0
            }
        }
    })
}

/// Rank (1 = most similar) of column `truth` in `row`; entries tied with the
/// true score share the average rank.
pub fn probe_rank(row: &[f64], truth: usize) -> f64 {
    let s = row[truth];
    let greater = row.iter().filter(|&&x| x > s).count();
    let tied = row.iter().enumerate().filter(|&(j, &x)| j != truth && x == s).count();
    1.0 + greater as f64 + tied as f64 / 2.0
}

/// Affine map of `weights` onto `[w_opt, 1]` (minimum to `w_opt`, maximum to
/// 1). Returns `None` when all weights are equal.
pub fn rank_opt_rescale(weights: &[f64], w_opt: f64) -> Option<Vec<f64>> {
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return None;
    }
    Some(weights.iter().map(|w| w_opt + (1.0 - w_opt) * (w - lo) / (hi - lo)).collect())
}

/// Intermediate and final matcher weights.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightReport {
    pub variant: RankVariant,
    pub w_opt: f64,
    /// Mean probe weight per matcher.
    pub raw: Vec<f64>,
    /// `raw` scaled to sum to one.
    pub normalized: Vec<f64>,
    /// Final weights: rescaled onto `[w_opt, 1]` and normalized again
    /// (equal to `normalized` when the rescale does not apply).
    pub rescaled: Vec<f64>,
}

impl WeightReport {
    /// Weights for a (gaze, periocular) matcher pair.
    pub fn fusion_weights(&self) -> Result<FusionWeights> {
        match self.rescaled.as_slice() {
            [g, p] => FusionWeights::from_pair(*g, *p),
            other => bail!(InvalidArgument, "expected two matchers, found {}", other.len()),
        }
    }
}

fn normalize_sum(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter().map(|x| x / total).collect()
    } else {
        alloc::vec![1.0 / v.len() as f64; v.len()]
    }
}

/// Rank-derived weights for each matcher. `sims[m]` is the probes x gallery
/// similarity matrix of matcher `m` and `true_identity[i]` the gallery column
/// of probe `i`'s identity.
///
/// All-zero raw weights normalize to equal weights.
pub fn compute_matcher_weights(
    sims: &[Matrix],
    true_identity: &[usize],
    cfg: &RankFusionConfig,
) -> Result<WeightReport> {
    RankFusionConfig::new(cfg.variant, cfg.w_opt)?;
    let Some(first) = sims.first() else {
        bail!(InvalidArgument, "no matchers supplied");
    };
    let (k, gallery) = (first.rows(), first.cols());
    if k == 0 {
        bail!(InvalidArgument, "rank weighting needs at least one probe");
    }
    if true_identity.len() != k {
        return Err(Error::ShapeMismatch {
            expected: k,
            found: true_identity.len(),
        });
    }
    if let Some(&bad) = true_identity.iter().find(|&&t| t >= gallery) {
        bail!(InvalidArgument, "true identity index {bad} outside gallery of {gallery}");
    }
    let mut raw = Vec::with_capacity(sims.len());
    for m in sims {
        if m.rows() != k || m.cols() != gallery {
            return Err(Error::ShapeMismatch {
                expected: k * gallery,
                found: m.rows() * m.cols(),
            });
        }
        let mut total = 0.0;
        for (i, &t) in true_identity.iter().enumerate() {
            total += rank_probe_weight(probe_rank(m.row(i), t), gallery, cfg.variant)?;
        }
        raw.push(total / k as f64);
    }
    let normalized = normalize_sum(&raw);
    let rescaled = match rank_opt_rescale(&normalized, cfg.w_opt) {
        Some(r) => normalize_sum(&r),
        None => normalized.clone(),
    };
    Ok(WeightReport {
        variant: cfg.variant,
        w_opt: cfg.w_opt,
        raw,
        normalized,
        rescaled,
    })
}
