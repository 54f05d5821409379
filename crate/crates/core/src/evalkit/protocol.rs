//! Centroid enrollment/verification protocol.
//!
//! For each subject, the first `n` gaze chunks (or `k` periocular images) of
//! a session are averaged into a centroid. Verification centroids are
//! compared with every enrollment centroid by cosine similarity: same-subject
//! comparisons are genuine, all ordered cross-subject comparisons impostor.
//! Scores may be pooled over several (enrollment, verification) session
//! pairs; each pair on its own uses at most one centroid per subject and
//! role.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::metrics::ScoreSet;
use crate::embedding::{EmbeddingSet, Modality};
use crate::error::{Error, Result};
use crate::fusion::{centroid, ef1_apply_rows, ef2_concat, sf1_fuse, AggregationSpec, FusionWeights, ScorePair};
use crate::math::Matrix;
use crate::metriclearn::{LinearFusionModel, cosine_similarity_matrix};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionPair {
    pub enroll: String,
    pub verify: String,
}

impl SessionPair {
    pub fn new(enroll: impl Into<String>, verify: impl Into<String>) -> Self {
        Self {
            enroll: enroll.into(),
            verify: verify.into(),
        }
    }
}

/// Every ordered pair of distinct sessions.
pub fn all_session_pairs<S: AsRef<str>>(sessions: &[S]) -> Vec<SessionPair> {
    let mut out = Vec::new();
    for e in sessions {
        for v in sessions {
            if e.as_ref() != v.as_ref() {
                out.push(SessionPair::new(e.as_ref(), v.as_ref()));
            }
        }
    }
    out
}

/// Row `i` of `verify` against every row of `enroll`: cosine matrix with
/// genuine comparisons on the diagonal.
fn cross_cosines(verify: &Matrix, enroll: &Matrix) -> Result<Matrix> {
    let n = verify.rows();
    let mut stacked = verify.as_slice().to_vec();
    stacked.extend_from_slice(enroll.as_slice());
    let all = cosine_similarity_matrix(&Matrix::from_vec(2 * n, verify.cols(), stacked)?)?;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, all.get(i, n + j));
        }
    }
    Ok(out)
}

fn split_diagonal(sim: &Matrix, into: &mut ScoreSet) {
    for i in 0..sim.rows() {
        for j in 0..sim.cols() {
            let s = sim.get(i, j);
            if i == j {
                into.genuine.push(s);
            } else {
                into.impostor.push(s);
            }
        }
    }
}

/// Scores from two sets holding at most one session per subject each
/// (enrollment and verification), for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScores {
    pub scores: ScoreSet,
    pub subjects: Vec<String>,
    /// Subjects present in only one of the two sets.
    pub skipped: Vec<String>,
}

fn single_session_centroids(
    set: &EmbeddingSet,
    modality: Modality,
    count: usize,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut sessions: BTreeMap<&str, &str> = BTreeMap::new();
    for r in set.records().iter().filter(|r| r.modality == modality) {
        if let Some(prev) = sessions.insert(&r.subject_id, &r.session_id) {
            if prev != r.session_id {
                return Err(Error::Protocol(alloc::format!(
                    "subject {} has more than one {modality} session ({prev}, {})",
                    r.subject_id, r.session_id
                )));
            }
        }
    }
    let mut out = BTreeMap::new();
    for (subject, session) in sessions {
        if let Some(c) = centroid(set, subject, session, modality, count)? {
            out.insert(subject.to_string(), c);
        }
    }
    Ok(out)
}

/// Genuine and impostor scores of one modality from an enrollment set and a
/// verification set. Centroids use the first `count` chunks.
pub fn build_trial_scores(
    enroll: &EmbeddingSet,
    verify: &EmbeddingSet,
    modality: Modality,
    count: usize,
) -> Result<TrialScores> {
    if count == 0 {
        bail!(InvalidArgument, "centroid chunk count must be at least 1");
    }
    let e = single_session_centroids(enroll, modality, count)?;
    let v = single_session_centroids(verify, modality, count)?;
    let subjects: Vec<String> = e.keys().filter(|s| v.contains_key(*s)).cloned().collect();
    let skipped = e
        .keys()
        .chain(v.keys())
        .filter(|s| !(e.contains_key(*s) && v.contains_key(*s)))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if subjects.is_empty() {
        bail!(Protocol, "enrollment and verification sets share no {modality} subjects");
    }
    let em = Matrix::from_rows(&subjects.iter().map(|s| &e[s]).collect::<Vec<_>>())?;
    let vm = Matrix::from_rows(&subjects.iter().map(|s| &v[s]).collect::<Vec<_>>())?;
    let mut scores = ScoreSet::default();
    split_diagonal(&cross_cosines(&vm, &em)?, &mut scores);
    Ok(TrialScores {
        scores,
        subjects,
        skipped,
    })
}

/// Centroids of one session pair, rows aligned with [`ProtocolData::subjects`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairCentroids {
    pub pair: SessionPair,
    pub gaze_enroll: Matrix,
    pub gaze_verify: Matrix,
    pub peri_enroll: Matrix,
    pub peri_verify: Matrix,
}

/// A score-producing rule with any fitted parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedMethod {
    Ema,
    Pia,
    Sf1(FusionWeights),
    Sf2 { label: String, weights: FusionWeights },
    Ef1(LinearFusionModel),
    Ef2,
}

impl FittedMethod {
    pub fn label(&self) -> String {
        match self {
            Self::Ema => "EMA".into(),
            Self::Pia => "PIA".into(),
            Self::Sf1(_) => "SF1".into(),
            Self::Sf2 { label, .. } => label.clone(),
            Self::Ef1(_) => "EF1".into(),
            Self::Ef2 => "EF2".into(),
        }
    }
}

/// Centroids for a subject population over one or more session pairs.
///
/// Only subjects with embeddings in every listed session for both
/// modalities take part; the rest are reported in `skipped`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolData {
    pub subjects: Vec<String>,
    pub skipped: Vec<String>,
    pub spec: AggregationSpec,
    pub pairs: Vec<PairCentroids>,
}

impl ProtocolData {
    pub fn build(
        gaze: &EmbeddingSet,
        periocular: &EmbeddingSet,
        subjects: &BTreeSet<String>,
        session_pairs: &[SessionPair],
        spec: AggregationSpec,
    ) -> Result<Self> {
        spec.validate()?;
        if session_pairs.is_empty() {
            bail!(InvalidArgument, "no session pairs given");
        }
        if let Some(p) = session_pairs.iter().find(|p| p.enroll == p.verify) {
            bail!(Protocol, "session {} used for both enrollment and verification", p.enroll);
        }
        let sessions: BTreeSet<&str> = session_pairs
            .iter()
            .flat_map(|p| [p.enroll.as_str(), p.verify.as_str()])
            .collect();
        let mut kept = Vec::new();
        let mut skipped = Vec::new();
        let mut cache: BTreeMap<(&str, &str), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for subject in subjects {
            let mut complete = true;
            let mut mine = Vec::new();
            for &session in &sessions {
                let g = centroid(gaze, subject, session, Modality::Gaze, spec.gaze_chunks)?;
                let p = centroid(periocular, subject, session, Modality::Periocular, spec.periocular_images)?;
                match (g, p) {
                    (Some(g), Some(p)) => mine.push((session, g, p)),
                    _ => complete = false,
                }
            }
            if complete {
                for (session, g, p) in mine {
                    cache.insert((subject.as_str(), session), (g, p));
                }
                kept.push(subject.clone());
            } else {
                skipped.push(subject.clone());
            }
        }
        if kept.len() < 2 {
            bail!(
                Protocol,
                "need at least 2 subjects with every session in both modalities, found {}",
                kept.len()
            );
        }
        let table = |session: &str, gaze: bool| -> Result<Matrix> {
            let rows: Vec<&Vec<f64>> = kept
                .iter()
                .map(|s| {
                    let (g, p) = &cache[&(s.as_str(), session)];
                    if gaze {
                        g
                    } else {
                        p
                    }
                })
                .collect();
            Matrix::from_rows(&rows)
        };
        let pairs = session_pairs
            .iter()
            .map(|sp| {
                Ok(PairCentroids {
                    pair: sp.clone(),
                    gaze_enroll: table(&sp.enroll, true)?,
                    gaze_verify: table(&sp.verify, true)?,
                    peri_enroll: table(&sp.enroll, false)?,
                    peri_verify: table(&sp.verify, false)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            subjects: kept,
            skipped,
            spec,
            pairs,
        })
    }

    /// Per-pair (gaze, periocular) similarity matrices, verify rows x enroll columns.
    pub fn modality_sims(&self) -> Result<Vec<(Matrix, Matrix)>> {
        self.pairs
            .iter()
            .map(|p| {
                Ok((
                    cross_cosines(&p.gaze_verify, &p.gaze_enroll)?,
                    cross_cosines(&p.peri_verify, &p.peri_enroll)?,
                ))
            })
            .collect()
    }

    /// Pooled scores of `method` over all session pairs.
    pub fn scores(&self, method: &FittedMethod) -> Result<ScoreSet> {
        let mut out = ScoreSet::default();
        for p in &self.pairs {
            let sim = match method {
                FittedMethod::Ema => cross_cosines(&p.gaze_verify, &p.gaze_enroll)?,
                FittedMethod::Pia => cross_cosines(&p.peri_verify, &p.peri_enroll)?,
                FittedMethod::Sf1(w) | FittedMethod::Sf2 { weights: w, .. } => {
                    let sg = cross_cosines(&p.gaze_verify, &p.gaze_enroll)?;
                    let sp = cross_cosines(&p.peri_verify, &p.peri_enroll)?;
                    let data = sg
                        .as_slice()
                        .iter()
                        .zip(sp.as_slice())
                        .map(|(&g, &s)| sf1_fuse(g, s, *w))
                        .collect();
                    Matrix::from_vec(sg.rows(), sg.cols(), data)?
                }
                FittedMethod::Ef2 => {
                    let concat = |g: &Matrix, q: &Matrix| -> Result<Matrix> {
                        let rows = (0..g.rows())
                            .map(|i| ef2_concat(g.row(i), q.row(i)))
                            .collect::<Result<Vec<_>>>()?;
                        Matrix::from_rows(&rows)
                    };
                    cross_cosines(
                        &concat(&p.gaze_verify, &p.peri_verify)?,
                        &concat(&p.gaze_enroll, &p.peri_enroll)?,
                    )?
                }
                FittedMethod::Ef1(model) => cross_cosines(
                    &ef1_apply_rows(model, &p.gaze_verify, &p.peri_verify)?,
                    &ef1_apply_rows(model, &p.gaze_enroll, &p.peri_enroll)?,
                )?,
            };
            split_diagonal(&sim, &mut out);
        }
        Ok(out)
    }

    /// Every comparison with both modality scores, in (pair, probe, gallery) order.
    pub fn score_pairs(&self) -> Result<Vec<ScorePair>> {
        let mut out = Vec::new();
        for (sg, sp) in self.modality_sims()? {
            for i in 0..sg.rows() {
                for j in 0..sg.cols() {
                    out.push(ScorePair {
                        probe: self.subjects[i].clone(),
                        gallery: self.subjects[j].clone(),
                        s_gaze: sg.get(i, j),
                        s_periocular: sp.get(i, j),
                        genuine: i == j,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Inputs for rank-derived weights: per matcher, the verification x
    /// enrollment similarities of all session pairs stacked by rows, and
    /// the true gallery column of every row.
    pub fn rank_inputs(&self) -> Result<(Vec<Matrix>, Vec<usize>)> {
        let n = self.subjects.len();
        let (mut g, mut p) = (Vec::new(), Vec::new());
        for (sg, sp) in self.modality_sims()? {
            g.extend_from_slice(sg.as_slice());
            p.extend_from_slice(sp.as_slice());
        }
        let rows = n * self.pairs.len();
        let truth = (0..rows).map(|r| r % n).collect();
        Ok((
            alloc::vec![Matrix::from_vec(rows, n, g)?, Matrix::from_vec(rows, n, p)?],
            truth,
        ))
    }
}
