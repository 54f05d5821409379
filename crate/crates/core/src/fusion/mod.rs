//! Centroid aggregation and the fusion rules: weighted score sum (SF1),
//! rank-derived matcher weights (SF2), normalized concatenation (EF2) and
//! the learned linear map (EF1).

mod rank;
mod score;

use alloc::vec::Vec;

use crate::embedding::{EmbeddingSet, Modality};
use crate::error::Result;
use crate::math::{norm, Matrix};
use crate::metriclearn::LinearFusionModel;

pub use rank::{
    compute_matcher_weights, probe_rank, rank_opt_rescale, rank_probe_weight, RankFusionConfig, RankVariant,
    WeightReport,
};
pub use score::{sf1_fuse, sf1_weight_sweep, sf2_fuse, FusionWeights, ScorePair, SweepRow};

/// How many leading chunks form a centroid: gaze windows `n` and periocular
/// images `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AggregationSpec {
    pub gaze_chunks: usize,
    pub periocular_images: usize,
}

impl Default for AggregationSpec {
    fn default() -> Self {
        Self {
            gaze_chunks: 1,
            periocular_images: 1,
        }
    }
}

impl AggregationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gaze_chunks == 0 || self.periocular_images == 0 {
            bail!(InvalidArgument, "aggregation counts must be at least 1");
        }
        Ok(())
    }

    pub fn count_for(&self, modality: Modality) -> usize {
        match modality {
            Modality::Gaze => self.gaze_chunks,
            Modality::Periocular => self.periocular_images,
            Modality::Fused => 1,
        }
    }
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > 0.0) || !n.is_finite() {
        bail!(InvalidArgument, "cannot L2-normalize a vector of norm {n}");
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Coordinate-wise mean.
pub fn aggregate_embeddings<V: AsRef<[f64]>>(vs: &[V]) -> Result<Vec<f64>> {
    let Some(first) = vs.first() else {
        bail!(InvalidArgument, "cannot aggregate an empty list of embeddings");
    };
    let dim = first.as_ref().len();
    let mut acc = alloc::vec![0.0; dim];
    for v in vs {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(crate::Error::ShapeMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = vs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Centroid of the first `count` chunks of `(subject, session, modality)`.
///
/// `Ok(None)` when there are no records; a data error when fewer than
/// `count` chunks exist.
pub fn centroid(
    set: &EmbeddingSet,
    subject: &str,
    session: &str,
    modality: Modality,
    count: usize,
) -> Result<Option<Vec<f64>>> {
    let chunks = set.chunks(subject, session, modality);
    if chunks.is_empty() {
        return Ok(None);
    }
    if chunks.len() < count {
        bail!(
            Data,
            "subject {subject}, session {session}: {} {modality} chunks available, {count} requested",
            chunks.len()
        );
    }
    let vs: Vec<&[f64]> = chunks[..count].iter().map(|r| r.vector.as_slice()).collect();
    aggregate_embeddings(&vs).map(Some)
}

/// `[g/|g|, p/|p|]`.
pub fn ef2_concat(g: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let mut out = l2_normalize(g)?;
    out.extend(l2_normalize(p)?);
    Ok(out)
}

/// Applies a trained fusion map to the normalized concatenation of `g` and `p`.
pub fn ef1_apply(model: &LinearFusionModel, g: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    if g.len() + p.len() != model.in_dim() {
        bail!(
            InvalidArgument,
            "model expects {} input coordinates, got {} + {}",
            model.in_dim(),
            g.len(),
            p.len()
        );
    }
    model.apply(&ef2_concat(g, p)?)
}

/// Row-wise [`ef1_apply`] over matching gaze / periocular matrices.
pub fn ef1_apply_rows(model: &LinearFusionModel, g: &Matrix, p: &Matrix) -> Result<Matrix> {
    let rows = (0..g.rows())
        .map(|i| ef1_apply(model, g.row(i), p.row(i)))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, model.out_dim()));
    }
    Matrix::from_rows(&rows)
}
