use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::evalkit::{eer, frr_at_far, roc_curve, FrrAtFar, ScoreSet};

/// Per-modality weights of a weighted score sum; `w_g + w_p = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FusionWeights {
    pub w_g: f64,
    pub w_p: f64,
}

impl FusionWeights {
    /// Weights `(w_g, 1 - w_g)`.
    pub fn new(w_g: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w_g) {
            bail!(InvalidArgument, "gaze weight {w_g} outside [0, 1]");
        }
        Ok(Self { w_g, w_p: 1.0 - w_g })
    }

    pub fn from_pair(w_g: f64, w_p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w_g) || !(0.0..=1.0).contains(&w_p) || (w_g + w_p - 1.0).abs() > 1e-12 {
            bail!(InvalidArgument, "weights ({w_g}, {w_p}) must lie in [0, 1] and sum to 1");
        }
        Ok(Self { w_g, w_p })
    }

    pub fn gaze_only() -> Self {
        Self { w_g: 1.0, w_p: 0.0 }
    }

    pub fn periocular_only() -> Self {
        Self { w_g: 0.0, w_p: 1.0 }
    }
}

/// `w_p * s_p + w_g * s_g`, kept inside `[min(s_g, s_p), max(s_g, s_p)]`
/// against rounding.
pub fn sf1_fuse(s_g: f64, s_p: f64, w: FusionWeights) -> f64 {
    let f = w.w_p * s_p + w.w_g * s_g;
    f.clamp(s_g.min(s_p), s_g.max(s_p))
}

/// One scored comparison with both modality similarities.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScorePair {
    #[cfg_attr(feature = "serde", serde(rename = "probe_subject"))]
    pub probe: String,
    #[cfg_attr(feature = "serde", serde(rename = "gallery_subject"))]
    pub gallery: String,
    pub s_gaze: f64,
    pub s_periocular: f64,
    pub genuine: bool,
}

impl ScorePair {
    /// Fused scores of `pairs` split into genuine and impostor sets.
    pub fn fused_scores(pairs: &[ScorePair], w: FusionWeights) -> Result<ScoreSet> {
        let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
        for p in pairs {
            let s = sf1_fuse(p.s_gaze, p.s_periocular, w);
            if p.genuine {
                genuine.push(s);
            } else {
                impostor.push(s);
            }
        }
        if genuine.is_empty() || impostor.is_empty() {
            return Err(Error::Protocol(alloc::format!(
                "score pairs need both classes ({} genuine, {} impostor)",
                genuine.len(),
                impostor.len()
            )));
        }
        ScoreSet::new(genuine, impostor)
    }
}

/// SF2 application: the SF1 rule with rank-derived weights.
pub fn sf2_fuse(pairs: &[ScorePair], w: FusionWeights) -> Vec<f64> {
    pairs.iter().map(|p| sf1_fuse(p.s_gaze, p.s_periocular, w)).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub w_g: f64,
    pub eer: f64,
    pub frr: Vec<FrrAtFar>,
}

/// Metrics for `w_g = 0, 1/steps, ..., 1`.
pub fn sf1_weight_sweep(pairs: &[ScorePair], steps: usize, far_targets: &[f64]) -> Result<Vec<SweepRow>> {
    if steps == 0 {
        bail!(InvalidArgument, "sweep needs at least one step");
    }
    (0..=steps)
        .map(|i| {
            let w_g = i as f64 / steps as f64;
            let curve = roc_curve(&ScorePair::fused_scores(pairs, FusionWeights::new(w_g)?)?)?;
            let frr = far_targets
                .iter()
                .map(|&t| frr_at_far(&curve, t))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                w_g,
                eer: eer(&curve),
                frr,
            })
        })
        .collect()
}
