use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Similarity scores of genuine and impostor comparisons.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    /// Checks that every score is a finite value in `[-1, 1]`.
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        for (name, v) in [("genuine", &genuine), ("impostor", &impostor)] {
            if let Some(bad) = v.iter().find(|s| !(-1.0..=1.0).contains(*s)) {
                bail!(Data, "{name} score {bad} outside [-1, 1]");
            }
        }
        Ok(Self { genuine, impostor })
    }

    pub fn extend(&mut self, other: ScoreSet) {
        self.genuine.extend(other.genuine);
        self.impostor.extend(other.impostor);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocPoint {
    /// Accept iff `score >= threshold`.
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Operating points ordered by strictly decreasing threshold. The first point
/// has threshold `+inf` (nothing accepted); the last sits at the lowest score
/// (everything accepted).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

pub fn roc_curve(scores: &ScoreSet) -> Result<RocCurve> {
    let (ng, ni) = (scores.genuine.len(), scores.impostor.len());
    if ng == 0 || ni == 0 {
        bail!(InvalidArgument, "ROC needs both classes ({ng} genuine, {ni} impostor)");
    }
    let mut gen = scores.genuine.clone();
    let mut imp = scores.impostor.clone();
    if gen.iter().chain(&imp).any(|s| s.is_nan()) {
        bail!(Data, "NaN score");
    }
    gen.sort_by(|a, b| b.total_cmp(a));
    imp.sort_by(|a, b| b.total_cmp(a));
    let mut points = Vec::with_capacity(ng + ni + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    // Walk both descending lists; counts are scores >= current threshold.
    let (mut gi, mut ii) = (0, 0);
    while gi < ng || ii < ni {
        let t = match (gen.get(gi), imp.get(ii)) {
            (Some(&g), Some(&i)) => g.max(i),
            (Some(&g), None) => g,
            (None, Some(&i)) => i,
            (None, None) => unreachable!(),
        };
        while gi < ng && gen[gi] >= t {
            gi += 1;
        }
        while ii < ni && imp[ii] >= t {
            ii += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: ii as f64 / ni as f64,
            frr: (ng - gi) as f64 / ng as f64,
        });
    }
    Ok(RocCurve {
        points,
        n_genuine: ng,
        n_impostor: ni,
    })
}

/// Equal error rate: the first operating point with `FAR - FRR >= 0`, or the
/// linear interpolation between it and its predecessor when the difference
/// is not exactly zero.
pub fn eer(curve: &RocCurve) -> f64 {
    let pts = &curve.points;
    for j in 1..pts.len() {
        let d1 = pts[j].far - pts[j].frr;
        if d1 >= 0.0 {
            if d1 == 0.0 {
                return pts[j].far;
            }
            let d0 = pts[j - 1].far - pts[j - 1].frr;
            let t = d0 / (d0 - d1);
            return pts[j - 1].far + t * (pts[j].far - pts[j - 1].far);
        }
    }
    // The last point always has FAR = 1, FRR = 0.
    unreachable!("ROC curve without a FAR = 1 end point")
}

/// FRR at a FAR target under both operating-point conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrrAtFar {
    pub far_target: f64,
    /// FRR at the most permissive threshold whose FAR does not exceed the target.
    pub frr: f64,
    /// FRR linearly interpolated at FAR = target between bracketing points.
    pub frr_interpolated: f64,
    pub threshold: f64,
    pub achieved_far: f64,
    /// Even the strictest finite threshold exceeds the target.
    pub unreachable: bool,
    /// Fewer than `1 / far_target` impostor scores.
    pub low_resolution: bool,
}

pub fn frr_at_far(curve: &RocCurve, far_target: f64) -> Result<FrrAtFar> {
    if !(far_target > 0.0 && far_target < 1.0) {
        bail!(InvalidArgument, "FAR target {far_target} outside (0, 1)");
    }
    let pts = &curve.points;
    let j = pts.iter().rposition(|p| p.far <= far_target).ok_or_else(|| {
        Error::InvalidArgument("ROC curve lacks its zero-FAR point".into())
    })?;
    let p = pts[j];
    let frr_interpolated = match pts.get(j + 1) {
        Some(q) => p.frr + (far_target - p.far) / (q.far - p.far) * (q.frr - p.frr),
        None => p.frr,
    };
    Ok(FrrAtFar {
        far_target,
        frr: p.frr,
        frr_interpolated,
        threshold: p.threshold,
        achieved_far: p.far,
        unreachable: j == 0,
        low_resolution: (curve.n_impostor as f64) * far_target < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(g: &[f64], i: &[f64]) -> ScoreSet {
        ScoreSet::new(g.to_vec(), i.to_vec()).unwrap()
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&roc_curve(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap()), 0.0);
        let e = eer(&roc_curve(&set(&[0.8, 0.6, 0.4], &[0.5, 0.3, 0.1])).unwrap());
        assert!((e - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn same_distribution_eer_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let i: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!((eer(&roc_curve(&set(&g, &i)).unwrap()) - 0.5).abs() < 0.05);
    }

    #[test]
    fn separated_curve_reaches_origin() {
        let c = roc_curve(&set(&[1.0], &[-1.0])).unwrap();
        assert_eq!(c.points.len(), 3);
        assert!(c.points.iter().any(|p| p.far == 0.0 && p.frr == 0.0));
        assert_eq!(c.points.last().unwrap().far, 1.0);
        assert_eq!(c.points.last().unwrap().frr, 0.0);
        let r = frr_at_far(&c, 1e-5).unwrap();
        assert_eq!(r.frr, 0.0);
        assert!(!r.unreachable && r.low_resolution);
    }

    #[test]
    fn roc_counts_match_direct_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g: Vec<f64> = (0..50).map(|_| (rng.random_range(-10..10) as f64) / 10.0).collect();
        let c = roc_curve(&set(&g, &g)).unwrap();
        for p in &c.points[1..] {
            let far = g.iter().filter(|&&s| s >= p.threshold).count() as f64 / 50.0;
            let frr = g.iter().filter(|&&s| s < p.threshold).count() as f64 / 50.0;
            assert_eq!((p.far, p.frr), (far, frr));
            assert!((p.far + p.frr - 1.0).abs() < 1e-15);
        }
        assert!(c.points.windows(2).all(|w| w[0].threshold > w[1].threshold
            && w[0].far <= w[1].far
            && w[0].frr >= w[1].frr));
    }

    #[test]
    fn unreachable_target_flagged() {
        // The top score is an impostor, so no finite threshold has FAR 0.
        let c = roc_curve(&set(&[0.5, 0.4], &[0.9, 0.1, 0.0, -0.2])).unwrap();
        let r = frr_at_far(&c, 0.1).unwrap();
        assert!(r.unreachable);
        assert_eq!(r.frr, 1.0);
    }

    #[test]
    fn interpolated_between_bracketing_points() {
        // thresholds: inf (0,1), 0.9 (0,0.5), 0.5 (0.5,0.5), 0.4 (0.5,0), 0.1 (1,0)
        let c = roc_curve(&set(&[0.9, 0.4], &[0.5, 0.1])).unwrap();
        let r = frr_at_far(&c, 0.25).unwrap();
        assert_eq!(r.frr, 0.5);
        assert_eq!(r.achieved_far, 0.0);
        assert_eq!(r.frr_interpolated, 0.5);
        let r = frr_at_far(&c, 0.75).unwrap();
        assert_eq!(r.frr, 0.0);
        assert_eq!(r.threshold, 0.4);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ScoreSet::new(vec![1.5], vec![0.0]).is_err());
        assert!(roc_curve(&set(&[], &[0.1])).is_err());
        let c = roc_curve(&set(&[0.2], &[0.1])).unwrap();
        assert!(frr_at_far(&c, 0.0).is_err());
        assert!(frr_at_far(&c, 1.0).is_err());
    }
}
