//! EF1: a bias-free linear map trained on concatenated, per-modality
//! L2-normalized gaze and periocular embeddings.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::adam::{AdamConfig, AdamState};
use super::linear::LinearFusionModel;
use super::msloss::{ms_loss_gradient, MsLossConfig};
use super::similarity::{gram, normalize_rows};
use crate::embedding::{EmbeddingSet, Modality};
use crate::error::{Error, Result};
use crate::evalkit::{eer, frr_at_far, roc_curve, ScoreSet};
use crate::fusion::{centroid, ef2_concat, AggregationSpec};
use crate::math::Matrix;

/// Output dimensions used for the reference configuration.
pub const PAPER_OUT_DIMS: [usize; 4] = [32, 64, 128, 256];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ef1Config {
    pub out_dim: usize,
    pub learning_rate: f64,
    pub max_epochs: u32,
    pub validate_every: u32,
    /// FAR at which validation FRR is measured (fraction, not percent).
    pub eval_far: f64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: MsLossConfig,
}

impl Default for Ef1Config {
    fn default() -> Self {
        Self {
            out_dim: 128,
            learning_rate: 3e-4,
            max_epochs: 1000,
            validate_every: 100,
            eval_far: 2e-5,
            seed: 42,
            adam: AdamConfig::default(),
            loss: MsLossConfig::without_miner(),
        }
    }
}

/// Gaze and periocular centroids of one `(subject, session)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSample {
    pub subject: String,
    pub session: String,
    pub gaze: Vec<f64>,
    pub periocular: Vec<f64>,
}

impl FusionSample {
    /// The model input: both modalities L2-normalized, then concatenated.
    pub fn input(&self) -> Result<Vec<f64>> {
        ef2_concat(&self.gaze, &self.periocular)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingLogEntry {
    pub epoch: u32,
    pub loss: f64,
    pub val_frr: f64,
    pub val_eer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ef1Outcome {
    pub model: LinearFusionModel,
    pub log: Vec<TrainingLogEntry>,
    pub best_epoch: u32,
    /// False when `out_dim` or the input width differs from the reference setup.
    pub paper_conformant: bool,
}

/// One sample per `(subject, session)` in which both modalities have
/// embeddings, for the given subjects.
///
/// A listed subject with no records in one of the modalities is a data error.
pub fn fusion_inputs(
    gaze: &EmbeddingSet,
    periocular: &EmbeddingSet,
    subjects: &BTreeSet<String>,
    spec: AggregationSpec,
) -> Result<Vec<FusionSample>> {
    spec.validate()?;
    let g_subjects = gaze.subjects();
    let p_subjects = periocular.subjects();
    let mut out = Vec::new();
    for subject in subjects {
        if !g_subjects.contains(subject.as_str()) {
            bail!(Data, "subject {subject} has no gaze embeddings");
        }
        if !p_subjects.contains(subject.as_str()) {
            bail!(Data, "subject {subject} has no periocular embeddings");
        }
        let sessions: BTreeSet<&str> = gaze
            .records()
            .iter()
            .filter(|r| &r.subject_id == subject)
            .map(|r| r.session_id.as_str())
            .collect();
        for session in sessions {
            let g = centroid(gaze, subject, session, Modality::Gaze, spec.gaze_chunks)?;
            let p = centroid(periocular, subject, session, Modality::Periocular, spec.periocular_images)?;
            if let (Some(g), Some(p)) = (g, p) {
                out.push(FusionSample {
                    subject: subject.clone(),
                    session: session.into(),
                    gaze: g,
                    periocular: p,
                });
            }
        }
    }
    Ok(out)
}

fn design_matrix(samples: &[FusionSample]) -> Result<(Matrix, Vec<usize>)> {
    let rows = samples.iter().map(FusionSample::input).collect::<Result<Vec<_>>>()?;
    let x = Matrix::from_rows(&rows)?;
    let ids: BTreeSet<&str> = samples.iter().map(|s| s.subject.as_str()).collect();
    let ids: Vec<&str> = ids.into_iter().collect();
    let labels = samples
        .iter()
        .map(|s| ids.binary_search(&s.subject.as_str()).unwrap_or(0))
        .collect();
    Ok((x, labels))
}

/// All unordered sample pairs scored by cosine of the fused embeddings.
fn pair_scores(model: &LinearFusionModel, x: &Matrix, labels: &[usize]) -> Result<ScoreSet> {
    let (unit, _) = normalize_rows(&model.forward(x))?;
    let sim = gram(&unit);
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let s = sim.get(i, j).clamp(-1.0, 1.0);
            if labels[i] == labels[j] {
                genuine.push(s);
            } else {
                impostor.push(s);
            }
        }
    }
    ScoreSet::new(genuine, impostor)
}

/// Full-batch Adam training of the linear fusion map with the
/// multi-similarity loss, validated every `validate_every` epochs and at the
/// last epoch. Returns the checkpoint with the lowest validation FRR at
/// `eval_far`; ties go to the lower validation EER, then the earlier epoch.
pub fn train_ef1(train: &[FusionSample], val: &[FusionSample], cfg: &Ef1Config) -> Result<Ef1Outcome> {
    if train.is_empty() || val.is_empty() {
        bail!(InvalidArgument, "EF1 needs non-empty training and validation samples");
    }
    if cfg.max_epochs == 0 || cfg.validate_every == 0 {
        bail!(InvalidArgument, "max_epochs and validate_every must be positive");
    }
    if !(cfg.learning_rate > 0.0) || !(cfg.eval_far > 0.0 && cfg.eval_far < 1.0) {
        bail!(InvalidArgument, "learning rate must be positive and eval_far in (0, 1)");
    }
    cfg.loss.validate()?;
    let train_ids: BTreeSet<&str> = train.iter().map(|s| s.subject.as_str()).collect();
    if let Some(shared) = val.iter().find(|s| train_ids.contains(s.subject.as_str())) {
        return Err(Error::Protocol(alloc::format!(
            "subject {} appears in both training and validation data",
            shared.subject
        )));
    }
    let (x, labels) = design_matrix(train)?;
    let (vx, vlabels) = design_matrix(val)?;
    if vx.cols() != x.cols() {
        return Err(Error::ShapeMismatch {
            expected: x.cols(),
            found: vx.cols(),
        });
    }
    let in_dim = x.cols();
    let paper_conformant = in_dim == crate::embedding::GAZE_DIM + crate::embedding::PERIOCULAR_DIM
        && PAPER_OUT_DIMS.contains(&cfg.out_dim);

    let mut model = LinearFusionModel::init_uniform(in_dim, cfg.out_dim, cfg.seed)?;
    let mut adam = AdamState::new(in_dim * cfg.out_dim, cfg.adam);
    let mut log = Vec::new();
    let mut best: Option<(f64, f64, u32, LinearFusionModel)> = None;
    for epoch in 1..=cfg.max_epochs {
        let step = ms_loss_gradient(&x, &labels, &model, &cfg.loss)?;
        adam.step(model.weights_mut(), step.grad.as_slice(), cfg.learning_rate)?;
        if epoch % cfg.validate_every == 0 || epoch == cfg.max_epochs {
            let curve = roc_curve(&pair_scores(&model, &vx, &vlabels)?)?;
            let val_frr = frr_at_far(&curve, cfg.eval_far)?.frr;
            let val_eer = eer(&curve);
            log.push(TrainingLogEntry {
                epoch,
                loss: step.loss,
                val_frr,
                val_eer,
            });
            if best.as_ref().is_none_or(|(f, e, _, _)| (val_frr, val_eer) < (*f, *e)) {
                best = Some((val_frr, val_eer, epoch, model.clone()));
            }
        }
    }
    let (_, _, best_epoch, model) = best.expect("at least one validation pass");
    Ok(Ef1Outcome {
        model,
        log,
        best_epoch,
        paper_conformant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples(subjects: core::ops::Range<usize>, sessions: usize, seed: u64) -> Vec<FusionSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for s in subjects {
            let mut srng = ChaCha8Rng::seed_from_u64(s as u64);
            let g0: Vec<f64> = (0..6).map(|_| srng.random_range(-1.0..1.0)).collect();
            let p0: Vec<f64> = (0..5).map(|_| srng.random_range(-1.0..1.0)).collect();
            for r in 0..sessions {
                out.push(FusionSample {
                    subject: format!("s{s:03}"),
                    session: format!("r{r}"),
                    gaze: g0.iter().map(|v| v + 0.3 * rng.random_range(-1.0..1.0)).collect(),
                    periocular: p0.iter().map(|v| v + 0.3 * rng.random_range(-1.0..1.0)).collect(),
                });
            }
        }
        out
    }

    fn small_cfg(out_dim: usize) -> Ef1Config {
        Ef1Config {
            out_dim,
            max_epochs: 60,
            validate_every: 20,
            eval_far: 0.01,
            learning_rate: 1e-2,
            ..Ef1Config::default()
        }
    }

    #[test]
    fn deterministic_training() {
        let train = samples(0..12, 3, 1);
        let val = samples(12..20, 3, 2);
        let a = train_ef1(&train, &val, &small_cfg(4)).unwrap();
        let b = train_ef1(&train, &val, &small_cfg(4)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![20, 40, 60]);
        assert!(!a.paper_conformant);
    }

    #[test]
    fn loss_decreases() {
        let train = samples(0..12, 3, 1);
        let val = samples(12..20, 3, 2);
        let out = train_ef1(&train, &val, &small_cfg(4)).unwrap();
        assert!(out.log.last().unwrap().loss < out.log[0].loss);
    }

    #[test]
    fn rejects_subject_overlap() {
        let train = samples(0..5, 2, 1);
        let val = samples(4..8, 2, 2);
        assert!(matches!(train_ef1(&train, &val, &small_cfg(3)), Err(Error::Protocol(_))));
    }

    #[test]
    fn inputs_have_unit_subvectors() {
        for s in samples(0..3, 2, 7) {
            let x = s.input().unwrap();
            let ng: f64 = x[..6].iter().map(|v| v * v).sum::<f64>().sqrt();
            let np: f64 = x[6..].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((ng - 1.0).abs() < 1e-12 && (np - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_checkpoint_is_logged_minimum() {
        let train = samples(0..12, 3, 3);
        let val = samples(12..20, 3, 4);
        let out = train_ef1(&train, &val, &small_cfg(5)).unwrap();
        let key = |e: &TrainingLogEntry| (e.val_frr, e.val_eer);
        let best = out.log.iter().find(|e| e.epoch == out.best_epoch).unwrap();
        assert!(out.log.iter().all(|e| key(best) <= key(e)));
        let first = out.log.iter().find(|e| key(e) == key(best)).unwrap();
        assert_eq!(first.epoch, out.best_epoch);
    }
}
