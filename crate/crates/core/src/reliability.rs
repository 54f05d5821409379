//! Temporal persistence and distribution of embedding features: Kendall's
//! coefficient of concordance, a normality screen against simulated normal
//! samples, feature intercorrelation, and an exponential EER-vs-KCC fit.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::{EmbeddingSet, Modality};
use crate::error::{Error, Result};
use crate::fusion::centroid;
use crate::math::{average_ranks, ln, exp, mean, median, percentile_sorted, sqrt, Matrix};

/// Feature values indexed by subject, round and feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    subjects: Vec<String>,
    rounds: Vec<String>,
    n_features: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// `values[(s * rounds + r) * n_features + f]`.
    pub fn new(subjects: Vec<String>, rounds: Vec<String>, n_features: usize, values: Vec<f64>) -> Result<Self> {
        if subjects.len() < 3 || rounds.len() < 2 || n_features == 0 {
            bail!(
                InvalidArgument,
                "feature matrix needs >= 3 subjects, >= 2 rounds and >= 1 feature (got {}, {}, {n_features})",
                subjects.len(),
                rounds.len()
            );
        }
        let expected = subjects.len() * rounds.len() * n_features;
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: values.len(),
            });
        }
        crate::math::check_finite(&values, "feature matrix")?;
        Ok(Self {
            subjects,
            rounds,
            n_features,
            values,
        })
    }

    /// One round per session: each value is the centroid of a subject's
    /// chunks in that session. Subjects missing any session are left out.
    pub fn from_embeddings(set: &EmbeddingSet, modality: Modality) -> Result<Self> {
        let rounds: Vec<String> = set.sessions().into_iter().map(String::from).collect();
        let Some(dim) = set.dim(modality) else {
            bail!(Data, "no {modality} embeddings");
        };
        let mut subjects = Vec::new();
        let mut values = Vec::new();
        let all: BTreeSet<&str> = set.subjects();
        'subject: for s in all {
            let mut row = Vec::with_capacity(rounds.len() * dim);
            for r in &rounds {
                let n = set.chunks(s, r, modality).len();
                match centroid(set, s, r, modality, n.max(1))? {
                    Some(c) => row.extend(c),
                    None => continue 'subject,
                }
            }
            subjects.push(s.into());
            values.extend(row);
        }
        Self::new(subjects, rounds, dim, values)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn rounds(&self) -> &[String] {
        &self.rounds
    }

    pub fn get(&self, subject: usize, round: usize, feature: usize) -> f64 {
        self.values[(subject * self.rounds.len() + round) * self.n_features + feature]
    }

    /// Subjects x rounds values of one feature.
    pub fn feature(&self, f: usize) -> Matrix {
        let (n, k) = (self.n_subjects(), self.n_rounds());
        let mut m = Matrix::zeros(n, k);
        for s in 0..n {
            for r in 0..k {
                m.set(s, r, self.get(s, r, f));
            }
        }
        m
    }

    /// Per-subject mean over rounds of one feature.
    pub fn round_means(&self, f: usize) -> Vec<f64> {
        let k = self.n_rounds() as f64;
        (0..self.n_subjects())
            .map(|s| (0..self.n_rounds()).map(|r| self.get(s, r, f)).sum::<f64>() / k)
            .collect()
    }
}

/// Tie-corrected Kendall's W for an `n subjects x k rounds` matrix, with
/// rounds acting as raters that rank the subjects.
pub fn kendalls_w(values: &Matrix) -> Result<f64> {
    let (n, k) = (values.rows(), values.cols());
    if n < 3 || k < 2 {
        bail!(InvalidArgument, "Kendall's W needs >= 3 subjects and >= 2 rounds, got {n} x {k}");
    }
    crate::math::check_finite(values.as_slice(), "Kendall's W input")?;
    let mut rank_sums = alloc::vec![0.0; n];
    let mut tie_total = 0.0;
    let mut column = alloc::vec![0.0; n];
    for r in 0..k {
        for (s, c) in column.iter_mut().enumerate() {
            *c = values.get(s, r);
        }
        let ranks = average_ranks(&column);
        for (acc, rk) in rank_sums.iter_mut().zip(&ranks) {
            *acc += rk;
        }
        tie_total += tie_correction(&column);
    }
    let (nf, kf) = (n as f64, k as f64);
    let mean_sum = kf * (nf + 1.0) / 2.0;
    let s: f64 = rank_sums.iter().map(|r| (r - mean_sum) * (r - mean_sum)).sum();
    let denom = kf * kf * (nf * nf * nf - nf) - kf * tie_total;
    if !(denom > 0.0) {
        bail!(Degenerate, "Kendall's W undefined: every round assigns all subjects the same value");
    }
    Ok((12.0 * s / denom).clamp(0.0, 1.0))
}

/// `sum (t^3 - t)` over groups of tied values.
fn tie_correction(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        total += t * t * t - t;
        i = j;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KccReport {
    pub per_feature_w: Vec<f64>,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub fn kcc_report(matrix: &FeatureMatrix) -> Result<KccReport> {
    let per_feature_w = (0..matrix.n_features())
        .map(|f| kendalls_w(&matrix.feature(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(KccReport {
        min: per_feature_w.iter().copied().fold(f64::INFINITY, f64::min),
        median: median(&per_feature_w),
        max: per_feature_w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        per_feature_w,
    })
}

/// Sample skewness `m3 / m2^1.5` and excess kurtosis `m4 / m2^2 - 3` from
/// uncorrected central moments. `None` for constant data.
pub fn skew_kurtosis(values: &[f64]) -> Option<(f64, f64)> {
    let mu = mean(values);
    let n = values.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if !(m2 > 0.0) {
        return None;
    }
    Some((m3 / (m2 * sqrt(m2)), m4 / (m2 * m2) - 3.0))
}

/// Percentile bands of skewness and excess kurtosis over simulated standard
/// normal samples of a fixed size.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalityReference {
    pub sample_size: usize,
    pub draws: usize,
    pub band: (f64, f64),
    pub seed: u64,
    pub skew_band: (f64, f64),
    pub kurtosis_band: (f64, f64),
}

impl NormalityReference {
    pub fn new(sample_size: usize, draws: usize, band: (f64, f64), seed: u64) -> Result<Self> {
        if sample_size < 20 {
            bail!(InvalidArgument, "normality screening needs >= 20 values, got {sample_size}");
        }
        if draws < 2 || !(0.0 <= band.0 && band.0 < band.1 && band.1 <= 100.0) {
            bail!(InvalidArgument, "need >= 2 reference draws and a percentile band lo < hi in [0, 100]");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample = alloc::vec![0.0; sample_size];
        let mut skews = Vec::with_capacity(draws);
        let mut kurts = Vec::with_capacity(draws);
        for _ in 0..draws {
            for x in sample.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            let (s, k) = skew_kurtosis(&sample).expect("continuous draws are not constant");
            skews.push(s);
            kurts.push(k);
        }
        skews.sort_by(f64::total_cmp);
        kurts.sort_by(f64::total_cmp);
        let bounds = |v: &[f64]| (percentile_sorted(v, band.0), percentile_sorted(v, band.1));
        Ok(Self {
            sample_size,
            draws,
            band,
            seed,
            skew_band: bounds(&skews),
            kurtosis_band: bounds(&kurts),
        })
    }

    /// True iff both skewness and excess kurtosis of `values` fall inside
    /// their bands.
    pub fn contains(&self, values: &[f64]) -> Result<bool> {
        if values.len() != self.sample_size {
            return Err(Error::ShapeMismatch {
                expected: self.sample_size,
                found: values.len(),
            });
        }
        let Some((s, k)) = skew_kurtosis(values) else {
            return Ok(false);
        };
        let inside = |x: f64, (lo, hi): (f64, f64)| lo <= x && x <= hi;
        Ok(inside(s, self.skew_band) && inside(k, self.kurtosis_band))
    }
}

pub fn normality_assess(values: &[f64], reference_draws: usize, band: (f64, f64), seed: u64) -> Result<bool> {
    NormalityReference::new(values.len(), reference_draws, band, seed)?.contains(values)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalityReport {
    pub per_feature_normal: Vec<bool>,
    pub count_normal: usize,
    pub reference: NormalityReference,
}

/// Screens each feature's round-averaged per-subject values against one
/// shared reference built for the subject count.
pub fn normality_report(matrix: &FeatureMatrix, draws: usize, band: (f64, f64), seed: u64) -> Result<NormalityReport> {
    let reference = NormalityReference::new(matrix.n_subjects(), draws, band, seed)?;
    let per_feature_normal = (0..matrix.n_features())
        .map(|f| reference.contains(&matrix.round_means(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalityReport {
        count_normal: per_feature_normal.iter().filter(|&&b| b).count(),
        per_feature_normal,
        reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntercorrelationSummary {
    pub median_abs: f64,
    pub max_abs: f64,
    pub n_pairs: usize,
    /// Features with zero variance, left out of every pair.
    pub excluded: Vec<usize>,
}

fn pearson_centered(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let da: f64 = a.iter().map(|x| x * x).sum();
    let db: f64 = b.iter().map(|x| x * x).sum();
    (num / sqrt(da * db)).clamp(-1.0, 1.0)
}

/// Median and maximum absolute correlation over all feature pairs, using
/// round-averaged per-subject values.
pub fn intercorrelation(matrix: &FeatureMatrix, method: CorrelationMethod) -> Result<IntercorrelationSummary> {
    let mut columns = Vec::new();
    let mut excluded = Vec::new();
    for f in 0..matrix.n_features() {
        let mut v = matrix.round_means(f);
        if method == CorrelationMethod::Spearman {
            v = average_ranks(&v);
        }
        let mu = mean(&v);
        v.iter_mut().for_each(|x| *x -= mu);
        if v.iter().all(|x| *x == 0.0) {
            excluded.push(f);
        } else {
            columns.push(v);
        }
    }
    if columns.len() < 2 {
        bail!(
            Statistics,
            "intercorrelation needs >= 2 features with variance, found {}",
            columns.len()
        );
    }
    let mut abs = Vec::with_capacity(columns.len() * (columns.len() - 1) / 2);
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            abs.push(pearson_centered(&columns[i], &columns[j]).abs());
        }
    }
    Ok(IntercorrelationSummary {
        median_abs: median(&abs),
        max_abs: abs.iter().copied().fold(0.0, f64::max),
        n_pairs: abs.len(),
        excluded,
    })
}

/// Smallest EER used in the log-linear fit.
pub const EER_FLOOR: f64 = 1e-6;

/// `EER = a * exp(b * KCC)` fitted by least squares on `ln EER`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
    /// `1 - (1 - R^2)(N - 1)/(N - 2)`, in log space.
    pub adj_r2: f64,
    pub n_points: usize,
    /// Number of EER values raised to [`EER_FLOOR`].
    pub clamped: usize,
}

pub fn fit_exponential(kcc: &[f64], eer: &[f64]) -> Result<ExpFit> {
    if kcc.len() != eer.len() {
        return Err(Error::ShapeMismatch {
            expected: kcc.len(),
            found: eer.len(),
        });
    }
    let n = kcc.len();
    if n < 3 {
        bail!(InvalidArgument, "exponential fit needs >= 3 points, got {n}");
    }
    crate::math::check_finite(kcc, "KCC values")?;
    let mut clamped = 0;
    let mut y = Vec::with_capacity(n);
    for &e in eer {
        if !(e > 0.0) || !e.is_finite() {
            bail!(InvalidArgument, "EER values must be positive and finite, got {e}");
        }
        if e < EER_FLOOR {
            clamped += 1;
        }
        y.push(ln(e.max(EER_FLOOR)));
    }
    let mx = mean(kcc);
    let my = mean(&y);
    let sxx: f64 = kcc.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        bail!(SingularFit, "all KCC values are equal");
    }
    let sxy: f64 = kcc.iter().zip(&y).map(|(x, v)| (x - mx) * (v - my)).sum();
    let b = sxy / sxx;
    let intercept = my - b * mx;
    let ss_res: f64 = kcc.iter().zip(&y).map(|(x, v)| {
            let r = v - intercept - b * x;
            r * r
        })
        .sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let nf = n as f64;
    Ok(ExpFit {
        a: exp(intercept),
        b,
        r2,
        adj_r2: 1.0 - (1.0 - r2) * (nf - 1.0) / (nf - 2.0),
        n_points: n,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn w_extremes() {
        let same = mat(&[&[1.0, 10.0, 0.1], &[2.0, 20.0, 0.2], &[3.0, 30.0, 0.3], &[4.0, 40.0, 0.4]]);
        assert!((kendalls_w(&same).unwrap() - 1.0).abs() < 1e-15);
        let opposite = mat(&[&[1.0, 4.0], &[2.0, 3.0], &[3.0, 2.0], &[4.0, 1.0]]);
        assert!(kendalls_w(&opposite).unwrap().abs() < 1e-15);
        let flat = mat(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        assert!(matches!(kendalls_w(&flat), Err(Error::Degenerate(_))));
        assert!(kendalls_w(&mat(&[&[1.0, 2.0], &[2.0, 1.0]])).is_err());
    }

    #[test]
    fn hand_computed_five_by_three() {
        // ranks by column: [1,2,3,4,5], [2,1,3,5,4], [1,3,2,4,5]
        // rank sums 4,6,8,13,14; mean 9; S = 25+9+1+16+25 = 76; W = 12*76/(9*120) = 0.8444..
        let m = mat(&[
            &[0.1, 0.2, 1.0],
            &[0.2, 0.1, 3.0],
            &[0.3, 0.3, 2.0],
            &[0.4, 0.5, 4.0],
            &[0.5, 0.4, 5.0],
        ]);
        assert!((kendalls_w(&m).unwrap() - 912.0 / 1080.0).abs() < 1e-15);
    }

    #[test]
    fn report_summary() {
        let subjects = vec!["a".into(), "b".into(), "c".into()];
        let rounds = vec!["r0".into(), "r1".into()];
        let values = vec![1.0, 5.0, 1.0, 5.0, 2.0, 6.0, 2.0, 6.0, 3.0, 7.0, 3.0, 7.0];
        let m = FeatureMatrix::new(subjects, rounds, 2, values).unwrap();
        let r = kcc_report(&m).unwrap();
        assert_eq!((r.min, r.median, r.max), (1.0, 1.0, 1.0));
    }

    #[test]
    fn skew_kurtosis_two_point() {
        let v: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let (s, k) = skew_kurtosis(&v).unwrap();
        assert!(s.abs() < 1e-15);
        assert!((k + 2.0).abs() < 1e-12);
        assert!(!normality_assess(&v, 200, (2.5, 97.5), 1).unwrap());
        assert!(normality_assess(&v[..10], 200, (2.5, 97.5), 1).is_err());
    }

    #[test]
    fn exponential_fit_exact() {
        let kcc = [0.1f64, 0.2, 0.35, 0.5, 0.8];
        let eer: Vec<f64> = kcc.iter().map(|k| 2.0 * (-5.0 * k).exp()).collect();
        let f = fit_exponential(&kcc, &eer).unwrap();
        assert!((f.a - 2.0).abs() / 2.0 < 1e-9);
        assert!((f.b + 5.0).abs() / 5.0 < 1e-9);
        assert!((f.adj_r2 - 1.0).abs() < 1e-9);
        assert_eq!(f.clamped, 0);
    }

    #[test]
    fn exponential_fit_errors() {
        assert!(matches!(
            fit_exponential(&[0.3, 0.3, 0.3], &[0.1, 0.2, 0.3]),
            Err(Error::SingularFit(_))
        ));
        assert!(fit_exponential(&[0.1, 0.2, 0.3], &[0.1, 0.0, 0.3]).is_err());
        assert!(fit_exponential(&[0.1, 0.2], &[0.1, 0.2]).is_err());
        let f = fit_exponential(&[0.1, 0.2, 0.3], &[0.1, 1e-9, 0.3]).unwrap();
        assert_eq!(f.clamped, 1);
    }

    #[test]
    fn intercorrelation_examples() {
        let subjects: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
        let rounds = vec!["a".into(), "b".into()];
        // features: x, x, -x, constant
        let mut values = Vec::new();
        for s in 0..5 {
            for _ in 0..2 {
                let x = (s * s) as f64;
                values.extend([x, x, -x, 4.0]);
            }
        }
        let m = FeatureMatrix::new(subjects, rounds, 4, values).unwrap();
        let r = intercorrelation(&m, CorrelationMethod::Pearson).unwrap();
        assert_eq!(r.excluded, vec![3]);
        assert_eq!(r.n_pairs, 3);
        assert!((r.max_abs - 1.0).abs() < 1e-15);
        let r = intercorrelation(&m, CorrelationMethod::Spearman).unwrap();
        assert!((r.median_abs - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn w_in_unit_interval_and_rank_invariant(
            data in proptest::collection::vec(-5.0f64..5.0, 6 * 3),
        ) {
            let m = Matrix::from_vec(6, 3, data.clone()).unwrap();
            let w = kendalls_w(&m).unwrap();
            prop_assert!((0.0..=1.0).contains(&w));
            // exp and a per-column affine map with positive slope are strictly monotone
            let t: Vec<f64> = data.iter().enumerate().map(|(i, x)| 3.0 * x.exp() + (i % 3) as f64).collect();
            let w2 = kendalls_w(&Matrix::from_vec(6, 3, t).unwrap()).unwrap();
            prop_assert_eq!(w, w2);
        }
    }
}
