//! Embedding records and the indexed set that carries them through the pipeline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Embedding length produced by the gaze encoder.
pub const GAZE_DIM: usize = 128;
/// Embedding length produced by the periocular encoder.
pub const PERIOCULAR_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Modality {
    Gaze,
    Periocular,
    Fused,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Gaze => "gaze",
            Modality::Periocular => "periocular",
            Modality::Fused => "fused",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaze" => Ok(Modality::Gaze),
            "periocular" => Ok(Modality::Periocular),
            "fused" => Ok(Modality::Fused),
            other => Err(Error::Schema(alloc::format!("unknown modality `{other}`"))),
        }
    }
}

/// One embedding vector tied to a subject, a recording session and a chunk
/// (gaze window index or periocular image index).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingRecord {
    #[cfg_attr(feature = "serde", serde(rename = "subject"))]
    pub subject_id: String,
    #[cfg_attr(feature = "serde", serde(rename = "session"))]
    pub session_id: String,
    pub modality: Modality,
    #[cfg_attr(feature = "serde", serde(rename = "chunk"))]
    pub chunk_index: u32,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn new(
        subject_id: impl Into<String>,
        session_id: impl Into<String>,
        modality: Modality,
        chunk_index: u32,
        vector: Vec<f64>,
    ) -> Self {
        Self {
            subject_id: subject_id.into(),
            session_id: session_id.into(),
            modality,
            chunk_index,
            vector,
        }
    }
}

type RecordKey = (String, String, Modality);

/// A validated collection of embedding records with a
/// `(subject, session, modality)` index.
///
/// Construction checks that vectors are finite, that each modality has a
/// single dimension and that `(subject, session, modality, chunk)` is unique.
/// The set is immutable afterwards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingSet {
    records: Vec<EmbeddingRecord>,
    index: BTreeMap<RecordKey, Vec<usize>>,
    dims: BTreeMap<Modality, usize>,
}

impl EmbeddingSet {
    pub fn new(records: Vec<EmbeddingRecord>) -> Result<Self> {
        let mut index: BTreeMap<RecordKey, Vec<usize>> = BTreeMap::new();
        let mut dims: BTreeMap<Modality, usize> = BTreeMap::new();
        for (pos, rec) in records.iter().enumerate() {
            if rec.vector.is_empty() {
                return Err(Error::Schema(alloc::format!(
                    "record {pos} ({}/{}) has an empty vector",
                    rec.subject_id, rec.session_id
                )));
            }
            if let Some(bad) = rec.vector.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(alloc::format!(
                    "record {pos} ({}/{}): coordinate {bad} is not finite",
                    rec.subject_id, rec.session_id
                )));
            }
            let dim = *dims.entry(rec.modality).or_insert(rec.vector.len());
            if dim != rec.vector.len() {
                return Err(Error::Schema(alloc::format!(
                    "record {pos} ({}/{}): {} vector has dimension {}, expected {dim}",
                    rec.subject_id,
                    rec.session_id,
                    rec.modality,
                    rec.vector.len()
                )));
            }
            index
                .entry((rec.subject_id.clone(), rec.session_id.clone(), rec.modality))
                .or_default()
                .push(pos);
        }
        for ((subject, session, modality), positions) in index.iter_mut() {
            positions.sort_by_key(|&p| records[p].chunk_index);
            if let Some(w) = positions
                .windows(2)
                .find(|w| records[w[0]].chunk_index == records[w[1]].chunk_index)
            {
                return Err(Error::Schema(alloc::format!(
                    "duplicate chunk {} for {subject}/{session}/{modality}",
                    records[w[0]].chunk_index
                )));
            }
        }
        Ok(Self {
            records,
            index,
            dims,
        })
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Vector dimension of `modality`, if any record of it is present.
    pub fn dim(&self, modality: Modality) -> Option<usize> {
        self.dims.get(&modality).copied()
    }

    pub fn modalities(&self) -> impl Iterator<Item = Modality> + '_ {
        self.dims.keys().copied()
    }

    /// Records for one `(subject, session, modality)`, ordered by chunk index.
    pub fn chunks(&self, subject: &str, session: &str, modality: Modality) -> Vec<&EmbeddingRecord> {
        self.index
            .get(&(subject.to_string(), session.to_string(), modality))
            .map(|ps| ps.iter().map(|&p| &self.records[p]).collect())
            .unwrap_or_default()
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.subject_id.as_str()).collect()
    }

    pub fn sessions(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.session_id.as_str()).collect()
    }

    /// Subjects having at least one record for `(session, modality)`.
    pub fn subjects_in(&self, session: &str, modality: Modality) -> BTreeSet<&str> {
        self.index
            .keys()
            .filter(|(_, s, m)| s == session && *m == modality)
            .map(|(subj, _, _)| subj.as_str())
            .collect()
    }

    /// Subset of records whose subject is in `subjects`.
    pub fn restrict_subjects(&self, subjects: &BTreeSet<String>) -> Self {
        let records = self
            .records
            .iter()
            .filter(|r| subjects.contains(&r.subject_id))
            .cloned()
            .collect();
        // Subsets of a valid set are valid.
        Self::new(records).expect("subset of a valid set")
    }

    /// Union of two sets; fails on any invariant violation across them.
    pub fn merge(self, other: Self) -> Result<Self> {
        let mut records = self.records;
        records.extend(other.records);
        Self::new(records)
    }
}

/// Disjoint halves of a subject population.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubjectSplit {
    pub part_a: BTreeSet<String>,
    pub part_b: BTreeSet<String>,
    pub seed: u64,
}

/// Seeded split of `subjects` into two halves; `part_a` receives the extra
/// subject when the count is odd.
///
/// Ids are sorted lexicographically before a ChaCha8 shuffle, so the result
/// depends only on the id set and the seed.
pub fn split_subjects<I, S>(subjects: I, seed: u64) -> Result<SubjectSplit>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let unique: BTreeSet<String> = subjects.into_iter().map(|s| s.as_ref().to_string()).collect();
    if unique.len() < 2 {
        bail!(InvalidArgument, "need at least 2 subjects to split, got {}", unique.len());
    }
    let mut ordered: Vec<String> = unique.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ordered.shuffle(&mut rng);
    let cut = ordered.len().div_ceil(2);
    let part_b = ordered.split_off(cut).into_iter().collect();
    Ok(SubjectSplit {
        part_a: ordered.into_iter().collect(),
        part_b,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn rec(subject: &str, chunk: u32, v: Vec<f64>) -> EmbeddingRecord {
        EmbeddingRecord::new(subject, "enroll", Modality::Gaze, chunk, v)
    }

    #[test]
    fn mixed_dimensions_within_modality_rejected() {
        let err = EmbeddingSet::new(vec![rec("a", 0, vec![0.0; 128]), rec("b", 0, vec![0.0; 64])])
            .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn dimensions_may_differ_across_modalities() {
        let mut p = rec("a", 0, vec![1.0; 256]);
        p.modality = Modality::Periocular;
        let set = EmbeddingSet::new(vec![rec("a", 0, vec![1.0; 128]), p]).unwrap();
        assert_eq!(set.dim(Modality::Gaze), Some(128));
        assert_eq!(set.dim(Modality::Periocular), Some(256));
    }

    #[test]
    fn nan_coordinate_is_data_error() {
        let err = EmbeddingSet::new(vec![rec("a", 0, vec![0.0, f64::NAN])]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn duplicate_chunk_rejected() {
        let err = EmbeddingSet::new(vec![rec("a", 1, vec![1.0]), rec("a", 1, vec![2.0])]).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn chunks_come_back_in_index_order() {
        let set = EmbeddingSet::new(vec![
            rec("a", 2, vec![2.0]),
            rec("a", 0, vec![0.0]),
            rec("b", 0, vec![5.0]),
            rec("a", 1, vec![1.0]),
        ])
        .unwrap();
        let got: Vec<u32> = set.chunks("a", "enroll", Modality::Gaze).iter().map(|r| r.chunk_index).collect();
        assert_eq!(got, vec![0, 1, 2]);
        assert!(set.chunks("a", "verify", Modality::Gaze).is_empty());
    }

    #[test]
    fn empty_set_is_valid() {
        assert!(EmbeddingSet::new(Vec::new()).unwrap().is_empty());
    }

    #[test]
    fn split_is_deterministic_for_seed_42() {
        let subjects = ["s1", "s2", "s3", "s4"];
        let a = split_subjects(subjects, 42).unwrap();
        let b = split_subjects(subjects, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.part_a.len(), 2);
    }

    #[test]
    fn split_sizes() {
        let five = split_subjects(["a", "b", "c", "d", "e"], 1).unwrap();
        assert_eq!((five.part_a.len(), five.part_b.len()), (3, 2));
        let two = split_subjects(["a", "b"], 7).unwrap();
        assert_eq!((two.part_a.len(), two.part_b.len()), (1, 1));
        assert!(matches!(split_subjects(["a"], 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn split_ignores_input_order() {
        let a = split_subjects(["x", "y", "z", "w"], 3).unwrap();
        let b = split_subjects(["w", "z", "y", "x"], 3).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn split_is_a_balanced_partition(n in 2usize..60, seed in any::<u64>()) {
            let ids: Vec<String> = (0..n).map(|i| format!("subj-{i}")).collect();
            let split = split_subjects(&ids, seed).unwrap();
            prop_assert!(split.part_a.is_disjoint(&split.part_b));
            let union: BTreeSet<String> = split.part_a.union(&split.part_b).cloned().collect();
            prop_assert_eq!(union, ids.iter().cloned().collect::<BTreeSet<_>>());
            prop_assert!(split.part_a.len() - split.part_b.len() <= 1);
        }
    }
}
