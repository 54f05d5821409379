//! Seeded generators with controllable ground truth: embeddings with tunable
//! separability and temporal persistence, jumping-dot gaze recordings, and
//! genuine/impostor score sets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::{EmbeddingRecord, EmbeddingSet, Modality};
use crate::error::Result;
use crate::evalkit::ScoreSet;
use crate::gazeprep::GazeRecording;
use crate::math::{axpy, dot, norm};

/// Embedding generator settings.
///
/// Every subject has a mean drawn with `between_spread`, either isotropic or,
/// when `identity_dims > 0`, inside a fixed random subspace of that
/// dimension shared by all subjects; each round shifts
/// it by `(1 - persistence) * between_spread` Gaussian drift and by
/// `nuisance_spread` noise confined to a fixed random `nuisance_dims`
/// subspace shared by all subjects; each chunk adds isotropic
/// `within_spread` noise. Vectors are finally scaled to unit length.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthEmbeddingConfig {
    pub modality: Modality,
    pub n_subjects: usize,
    pub rounds: usize,
    pub chunks_per_round: usize,
    pub dim: usize,
    pub within_spread: f64,
    pub between_spread: f64,
    pub persistence: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub nuisance_dims: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub nuisance_spread: f64,
    /// 0 means the full embedding dimension.
    #[cfg_attr(feature = "serde", serde(default))]
    pub identity_dims: usize,
    pub seed: u64,
}

impl SynthEmbeddingConfig {
    pub fn new(modality: Modality, n_subjects: usize, dim: usize, seed: u64) -> Self {
        Self {
            modality,
            n_subjects,
            rounds: 2,
            chunks_per_round: 1,
            dim,
            within_spread: 0.5,
            between_spread: 1.0,
            persistence: 0.9,
            nuisance_dims: 0,
            nuisance_spread: 0.0,
            identity_dims: 0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.rounds == 0 || self.chunks_per_round == 0 {
            bail!(InvalidArgument, "subject, round and chunk counts must be positive");
        }
        if self.dim < 2 {
            bail!(InvalidArgument, "embedding dimension must be at least 2");
        }
        if !(self.between_spread > 0.0) || !(self.within_spread >= 0.0) || !(self.nuisance_spread >= 0.0) {
            bail!(InvalidArgument, "between_spread must be positive, other spreads non-negative");
        }
        if !(0.0..=1.0).contains(&self.persistence) {
            bail!(InvalidArgument, "persistence must lie in [0, 1]");
        }
        if self.nuisance_dims > self.dim || self.identity_dims > self.dim {
            bail!(InvalidArgument, "nuisance or identity subspace larger than the embedding");
        }
        Ok(())
    }
}

/// Zero-padded subject id shared by all generators.
pub fn subject_id(index: usize, n_subjects: usize) -> String {
    let width = n_subjects.saturating_sub(1).max(1).ilog10() as usize + 1;
    format!("s{index:0width$}", width = width.max(3))
}

pub fn round_id(round: usize) -> String {
    format!("r{round}")
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Orthonormal basis of a random `q`-dimensional subspace.
fn random_subspace(rng: &mut ChaCha8Rng, dim: usize, q: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(q);
    while basis.len() < q {
        let mut v = gaussian(rng, dim);
        for b in &basis {
            let c = dot(&v, b);
            axpy(-c, b, &mut v);
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

pub fn gen_embeddings(cfg: &SynthEmbeddingConfig) -> Result<EmbeddingSet> {
    cfg.validate()?;
    let mut shared = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nuisance = random_subspace(&mut shared, cfg.dim, cfg.nuisance_dims);
    let identity = random_subspace(&mut shared, cfg.dim, cfg.identity_dims);
    let drift = (1.0 - cfg.persistence) * cfg.between_spread;
    let mut records = Vec::with_capacity(cfg.n_subjects * cfg.rounds * cfg.chunks_per_round);
    for s in 0..cfg.n_subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(s as u64 + 1);
        let id = subject_id(s, cfg.n_subjects);
        let mu = if identity.is_empty() {
            let mut mu = gaussian(&mut rng, cfg.dim);
            mu.iter_mut().for_each(|x| *x *= cfg.between_spread);
            mu
        } else {
            let mut mu = alloc::vec![0.0; cfg.dim];
            for b in &identity {
                let z: f64 = rng.sample(StandardNormal);
                axpy(cfg.between_spread * z, b, &mut mu);
            }
            mu
        };
        for r in 0..cfg.rounds {
            let mut round_mean = mu.clone();
            axpy(drift, &gaussian(&mut rng, cfg.dim), &mut round_mean);
            for b in &nuisance {
                let z: f64 = rng.sample(StandardNormal);
                axpy(cfg.nuisance_spread * z, b, &mut round_mean);
            }
            for c in 0..cfg.chunks_per_round {
                let mut v = round_mean.clone();
                axpy(cfg.within_spread, &gaussian(&mut rng, cfg.dim), &mut v);
                let n = norm(&v);
                v.iter_mut().for_each(|x| *x /= n);
                records.push(EmbeddingRecord::new(id.clone(), round_id(r), cfg.modality, c as u32, v));
            }
        }
    }
    EmbeddingSet::new(records)
}

/// Stimulus-following gaze behaviour of one simulated subject.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GazeSubjectParams {
    /// Fixation targets are uniform in `[-amplitude, amplitude]` per axis.
    pub amplitude_deg: f64,
    pub min_interval_s: f64,
    pub max_interval_s: f64,
    /// Standard deviation of white positional noise.
    pub noise_deg: f64,
    pub jumps: bool,
}

impl Default for GazeSubjectParams {
    fn default() -> Self {
        Self {
            amplitude_deg: 15.0,
            min_interval_s: 1.0,
            max_interval_s: 2.0,
            noise_deg: 0.1,
            jumps: true,
        }
    }
}

/// Piecewise-constant fixations with abrupt jumps at random intervals, plus
/// white noise. `round(duration_s * rate_hz)` samples.
pub fn gen_gaze_recording(
    params: &GazeSubjectParams,
    subject: &str,
    session: &str,
    duration_s: f64,
    rate_hz: f64,
    seed: u64,
) -> Result<GazeRecording> {
    if !(duration_s > 0.0) || !(rate_hz > 0.0) {
        bail!(InvalidArgument, "duration and sample rate must be positive");
    }
    if !(params.min_interval_s > 0.0 && params.min_interval_s <= params.max_interval_s) {
        bail!(InvalidArgument, "need 0 < min_interval_s <= max_interval_s");
    }
    let n = libm::round(duration_s * rate_hz) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = params.amplitude_deg;
    let target = |rng: &mut ChaCha8Rng| -> [f64; 2] {
        if amp > 0.0 {
            [rng.random_range(-amp..=amp), rng.random_range(-amp..=amp)]
        } else {
            [0.0, 0.0]
        }
    };
    let mut pos = target(&mut rng);
    let mut next_jump = 0.0;
    let mut h = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / rate_hz;
        if params.jumps && t >= next_jump {
            if i > 0 {
                pos = target(&mut rng);
            }
            next_jump = t + rng.random_range(params.min_interval_s..=params.max_interval_s);
        }
        let (nx, ny): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        h.push(pos[0] + params.noise_deg * nx);
        v.push(pos[1] + params.noise_deg * ny);
    }
    GazeRecording::new(subject, session, rate_hz, h, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthScoreConfig {
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub genuine_mean: f64,
    pub impostor_mean: f64,
    pub spread: f64,
    pub seed: u64,
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, spread: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let x = mean + spread * z;
        if (-1.0..=1.0).contains(&x) {
            return x;
        }
    }
}

/// Gaussian genuine and impostor scores truncated to `[-1, 1]` by rejection.
pub fn gen_score_set(cfg: &SynthScoreConfig) -> Result<ScoreSet> {
    if cfg.n_genuine == 0 || cfg.n_impostor == 0 {
        bail!(InvalidArgument, "score counts must be at least 1");
    }
    if !(cfg.spread > 0.0) {
        bail!(InvalidArgument, "spread must be positive");
    }
    if !(-1.0..=1.0).contains(&cfg.genuine_mean) || !(-1.0..=1.0).contains(&cfg.impostor_mean) {
        bail!(InvalidArgument, "score means must lie in [-1, 1]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let genuine = (0..cfg.n_genuine)
        .map(|_| truncated_normal(&mut rng, cfg.genuine_mean, cfg.spread))
        .collect();
    let impostor = (0..cfg.n_impostor)
        .map(|_| truncated_normal(&mut rng, cfg.impostor_mean, cfg.spread))
        .collect();
    ScoreSet::new(genuine, impostor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::{build_trial_scores, eer, frr_at_far, roc_curve, FIDO_FAR};
    use crate::gazeprep::{clamp_velocities, differentiate, segment_windows};
    use alloc::collections::BTreeSet;

    #[test]
    fn honours_counts_and_dims() {
        let mut cfg = SynthEmbeddingConfig::new(Modality::Periocular, 7, 12, 1);
        cfg.rounds = 3;
        cfg.chunks_per_round = 4;
        let set = gen_embeddings(&cfg).unwrap();
        assert_eq!(set.len(), 7 * 3 * 4);
        assert_eq!(set.dim(Modality::Periocular), Some(12));
        assert_eq!(set.subjects().len(), 7);
        assert_eq!(set, gen_embeddings(&cfg).unwrap());
        for r in set.records() {
            assert!((norm(&r.vector) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_limit_is_constant_per_subject() {
        let mut cfg = SynthEmbeddingConfig::new(Modality::Gaze, 4, 8, 3);
        cfg.within_spread = 0.0;
        cfg.persistence = 1.0;
        cfg.chunks_per_round = 3;
        let set = gen_embeddings(&cfg).unwrap();
        for s in set.subjects() {
            let vs: Vec<&Vec<f64>> = set.records().iter().filter(|r| r.subject_id == s).map(|r| &r.vector).collect();
            assert!(vs.iter().all(|v| *v == vs[0]));
        }
    }

    #[test]
    fn separable_config_has_low_eer() {
        let mut cfg = SynthEmbeddingConfig::new(Modality::Gaze, 200, 32, 42);
        cfg.within_spread = 0.1;
        let set = gen_embeddings(&cfg).unwrap();
        let keep = |round: &str| {
            EmbeddingSet::new(set.records().iter().filter(|r| r.session_id == round).cloned().collect()).unwrap()
        };
        let t = build_trial_scores(&keep("r0"), &keep("r1"), Modality::Gaze, 1).unwrap();
        assert!(eer(&roc_curve(&t.scores).unwrap()) < 0.05);
    }

    #[test]
    fn nuisance_subspace_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = random_subspace(&mut rng, 10, 4);
        for i in 0..4 {
            for j in 0..4 {
                let d = dot(&b[i], &b[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subject_ids_sort_numerically() {
        let ids: Vec<String> = (0..1200).map(|i| subject_id(i, 1200)).collect();
        let sorted: BTreeSet<&String> = ids.iter().collect();
        assert!(sorted.into_iter().eq(ids.iter()));
        assert_eq!(subject_id(5, 10), "s005");
    }

    #[test]
    fn gaze_recording_length_and_windows() {
        let rec = gen_gaze_recording(&GazeSubjectParams::default(), "s", "r", 25.0, 72.0, 1).unwrap();
        assert_eq!(rec.len(), 1800);
        let vel = differentiate(&rec);
        assert_eq!(segment_windows(&vel.samples, 360).unwrap().len(), 5);
        assert_eq!(rec, gen_gaze_recording(&GazeSubjectParams::default(), "s", "r", 25.0, 72.0, 1).unwrap());
    }

    #[test]
    fn still_gaze_has_zero_velocity() {
        let p = GazeSubjectParams {
            noise_deg: 0.0,
            jumps: false,
            ..GazeSubjectParams::default()
        };
        let rec = gen_gaze_recording(&p, "s", "r", 3.0, 72.0, 2).unwrap();
        let vel = differentiate(&rec);
        assert!(vel.samples[3..vel.samples.len() - 3]
            .iter()
            .all(|s| s[0].abs() < 1e-9 && s[1].abs() < 1e-9));
    }

    #[test]
    fn large_jump_is_clamped() {
        // The 7-point derivative spreads a step D over the window and peaks at
        // 6/28 * 72 * D deg/s, so the step must exceed about 65 degrees.
        let h: Vec<f64> = (0..40).map(|i| if i < 20 { -40.0 } else { 40.0 }).collect();
        let rec = GazeRecording::new("s", "r", 72.0, h, alloc::vec![0.0; 40]).unwrap();
        let vel = differentiate(&rec);
        let peak = vel.samples.iter().map(|s| s[0]).fold(0.0, f64::max);
        assert!(peak > 1000.0);
        let clamped = clamp_velocities(&vel.samples, 1000.0).unwrap();
        assert_eq!(clamped.iter().map(|s| s[0]).fold(0.0, f64::max), 1000.0);
    }

    #[test]
    fn score_sets() {
        let cfg = SynthScoreConfig {
            n_genuine: 500,
            n_impostor: 500,
            genuine_mean: 0.9,
            impostor_mean: -0.9,
            spread: 0.01,
            seed: 1,
        };
        let s = gen_score_set(&cfg).unwrap();
        assert_eq!(eer(&roc_curve(&s).unwrap()), 0.0);
        let same = gen_score_set(&SynthScoreConfig {
            n_genuine: 2000,
            n_impostor: 2000,
            genuine_mean: 0.2,
            impostor_mean: 0.2,
            spread: 0.3,
            ..cfg
        })
        .unwrap();
        assert!((eer(&roc_curve(&same).unwrap()) - 0.5).abs() < 0.05);
        let big = gen_score_set(&SynthScoreConfig {
            n_impostor: 200_000,
            genuine_mean: 0.6,
            impostor_mean: 0.0,
            spread: 0.1,
            ..cfg
        })
        .unwrap();
        assert!(big.genuine.iter().chain(&big.impostor).all(|s| (-1.0..=1.0).contains(s)));
        let f = frr_at_far(&roc_curve(&big).unwrap(), FIDO_FAR).unwrap();
        assert!(!f.low_resolution && !f.unreachable);
    }
}
