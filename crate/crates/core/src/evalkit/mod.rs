//! Biometric evaluation: scoring protocol, ROC, EER, FRR at fixed FAR and
//! the FIDO-style conformance check.

mod metrics;
mod protocol;

use alloc::string::String;
use alloc::vec::Vec;

pub use metrics::{eer, frr_at_far, roc_curve, FrrAtFar, RocCurve, RocPoint, ScoreSet};
pub use protocol::{
    all_session_pairs, build_trial_scores, FittedMethod, PairCentroids, ProtocolData, SessionPair, TrialScores,
};

use crate::error::Result;

/// FAR of the security operating point (1 in 50,000).
pub const FIDO_FAR: f64 = 2e-5;
/// Maximum FRR at [`FIDO_FAR`].
pub const FIDO_MAX_FRR: f64 = 0.03;
/// Maximum verification duration in seconds.
pub const FIDO_MAX_SECONDS: f64 = 30.0;

/// Experimental condition of one report cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Condition {
    pub gaze_seconds: f64,
    pub images: usize,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub condition: Condition,
    pub eer: f64,
    pub frr_at: Vec<FrrAtFar>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

impl EvalReport {
    pub fn from_scores(condition: Condition, scores: &ScoreSet, far_targets: &[f64]) -> Result<Self> {
        let curve = roc_curve(scores)?;
        let frr_at = far_targets
            .iter()
            .map(|&t| frr_at_far(&curve, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            condition,
            eer: eer(&curve),
            frr_at,
            n_genuine: curve.n_genuine,
            n_impostor: curve.n_impostor,
        })
    }

    pub fn frr_for(&self, far_target: f64) -> Option<&FrrAtFar> {
        self.frr_at
            .iter()
            .find(|f| (f.far_target - far_target).abs() <= 1e-12 * far_target.max(1e-300))
    }
}

/// Scores `method` on `data` and summarizes them. `window_seconds` is the
/// duration of one gaze chunk.
pub fn evaluate_protocol(
    data: &ProtocolData,
    method: &FittedMethod,
    far_targets: &[f64],
    window_seconds: f64,
) -> Result<EvalReport> {
    let scores = data.scores(method)?;
    let condition = Condition {
        gaze_seconds: data.spec.gaze_chunks as f64 * window_seconds,
        images: data.spec.periocular_images,
        method: method.label(),
    };
    EvalReport::from_scores(condition, &scores, far_targets)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FidoResult {
    pub frr: f64,
    pub verification_seconds: f64,
    pub frr_ok: bool,
    pub duration_ok: bool,
    pub pass: bool,
}

/// Pass iff FRR at FAR 0.002% is at most 3% and verification takes at most
/// 30 s. Uses the conservative FRR.
pub fn fido_check(report: &EvalReport, verification_seconds: f64) -> Result<FidoResult> {
    let Some(f) = report.frr_for(FIDO_FAR) else {
        bail!(InvalidArgument, "report has no FRR at FAR {FIDO_FAR}");
    };
    let frr_ok = f.frr <= FIDO_MAX_FRR;
    let duration_ok = verification_seconds <= FIDO_MAX_SECONDS;
    Ok(FidoResult {
        frr: f.frr,
        verification_seconds,
        frr_ok,
        duration_ok,
        pass: frr_ok && duration_ok,
    })
}
