//! Gaze preprocessing: angles to standardized velocity windows.
//!
//! Order of operations: differentiate, clamp, segment, standardize, then
//! zero-fill NaN. Edge samples without a full filter window are NaN and
//! only become 0 in the final fill step.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default recording rate of the headset eye tracker.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 72.0;
pub const DEFAULT_SG_WINDOW: usize = 7;
pub const DEFAULT_SG_ORDER: usize = 2;
/// Velocity clamp in degrees per second.
pub const DEFAULT_CLAMP_DEG_S: f64 = 1000.0;
pub const DEFAULT_WINDOW_SECONDS: f64 = 5.0;

/// A two-channel gaze-angle recording in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeRecording {
    pub subject_id: alloc::string::String,
    pub session_id: alloc::string::String,
    pub sample_rate_hz: f64,
    pub horizontal_deg: Vec<f64>,
    pub vertical_deg: Vec<f64>,
}

impl GazeRecording {
    pub fn new(
        subject_id: impl Into<alloc::string::String>,
        session_id: impl Into<alloc::string::String>,
        sample_rate_hz: f64,
        horizontal_deg: Vec<f64>,
        vertical_deg: Vec<f64>,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            bail!(InvalidArgument, "sample rate must be positive, got {sample_rate_hz}");
        }
        if horizontal_deg.len() != vertical_deg.len() {
            return Err(Error::ShapeMismatch {
                expected: horizontal_deg.len(),
                found: vertical_deg.len(),
            });
        }
        if horizontal_deg.is_empty() {
            bail!(InvalidArgument, "recording has no samples");
        }
        Ok(Self {
            subject_id: subject_id.into(),
            session_id: session_id.into(),
            sample_rate_hz,
            horizontal_deg,
            vertical_deg,
        })
    }

    pub fn len(&self) -> usize {
        self.horizontal_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizontal_deg.is_empty()
    }
}

/// Velocity samples in °/s, one `[horizontal, vertical]` pair per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySeries {
    pub samples: Vec<[f64; 2]>,
    /// Set when the recording was shorter than the filter window.
    pub too_short: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VelocityWindow {
    pub window_index: u32,
    pub samples: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StandardizationStats {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

/// Centered first-derivative Savitzky-Golay coefficients (per sample).
///
/// Fits a polynomial of degree `poly_order` by least squares over
/// `window_len` equally spaced samples and returns the weights whose dot
/// product with the window gives the fitted slope at the center.
pub fn sg_derivative_coeffs(window_len: usize, poly_order: usize) -> Result<Vec<f64>> {
    if window_len % 2 == 0 {
        bail!(InvalidArgument, "Savitzky-Golay window must be odd, got {window_len}");
    }
    if poly_order >= window_len {
        bail!(
            InvalidArgument,
            "polynomial order {poly_order} must be below window length {window_len}"
        );
    }
    let half = (window_len / 2) as i64;
    let terms = poly_order + 1;
    let offsets: Vec<f64> = (-half..=half).map(|x| x as f64).collect();

    // Normal matrix A[r][c] = sum x^(r+c); solve A z = e_1 for row 1 of A^-1.
    let mut power_sums = vec![0.0; 2 * terms - 1];
    for &x in &offsets {
        let mut xp = 1.0;
        for s in power_sums.iter_mut() {
            *s += xp;
            xp *= x;
        }
    }
    let mut aug = vec![vec![0.0; terms + 1]; terms];
    for (r, row) in aug.iter_mut().enumerate() {
        for c in 0..terms {
            row[c] = power_sums[r + c];
        }
    }
    if terms > 1 {
        aug[1][terms] = 1.0;
    } else {
        // A constant fit has zero slope.
        return Ok(vec![0.0; window_len]);
    }
    for col in 0..terms {
        let pivot_row = (col..terms)
            .max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))
            .unwrap_or(col);
        aug.swap(col, pivot_row);
        let pivot = aug[col][col];
        if pivot == 0.0 {
            bail!(SingularFit, "Savitzky-Golay normal equations are singular");
        }
        for r in 0..terms {
            if r != col {
                let f = aug[r][col] / pivot;
                if f != 0.0 {
                    for c in col..=terms {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    let z: Vec<f64> = (0..terms).map(|r| aug[r][terms] / aug[r][r]).collect();
    Ok(offsets
        .iter()
        .map(|&x| {
            let mut xp = 1.0;
            let mut acc = 0.0;
            for zk in &z {
                acc += zk * xp;
                xp *= x;
            }
            acc
        })
        .collect())
}

fn convolve_derivative(signal: &[f64], coeffs: &[f64], rate: f64) -> Vec<f64> {
    let n = signal.len();
    let w = coeffs.len();
    let half = w / 2;
    let mut out = vec![f64::NAN; n];
    if n < w {
        return out;
    }
    for (i, slot) in out.iter_mut().enumerate().take(n - half).skip(half) {
        let window = &signal[i - half..i - half + w];
        let d: f64 = window.iter().zip(coeffs).map(|(x, c)| x * c).sum();
        *slot = d * rate;
    }
    out
}

/// Velocities in °/s using the default (7, 2) Savitzky-Golay filter.
pub fn differentiate(rec: &GazeRecording) -> VelocitySeries {
    differentiate_with(rec, DEFAULT_SG_WINDOW, DEFAULT_SG_ORDER)
        .expect("default filter parameters are valid")
}

pub fn differentiate_with(rec: &GazeRecording, window_len: usize, poly_order: usize) -> Result<VelocitySeries> {
    let coeffs = sg_derivative_coeffs(window_len, poly_order)?;
    let h = convolve_derivative(&rec.horizontal_deg, &coeffs, rec.sample_rate_hz);
    let v = convolve_derivative(&rec.vertical_deg, &coeffs, rec.sample_rate_hz);
    Ok(VelocitySeries {
        samples: h.into_iter().zip(v).map(|(a, b)| [a, b]).collect(),
        too_short: rec.len() < window_len,
    })
}

/// Clamp every non-NaN entry to `[-limit, limit]`.
pub fn clamp_velocities(samples: &[[f64; 2]], limit: f64) -> Result<Vec<[f64; 2]>> {
    if !(limit > 0.0) {
        bail!(InvalidArgument, "clamp limit must be positive, got {limit}");
    }
    // f64::clamp passes NaN through unchanged.
    Ok(samples
        .iter()
        .map(|[h, v]| [h.clamp(-limit, limit), v.clamp(-limit, limit)])
        .collect())
}

/// Number of samples in a window of `seconds` at `rate_hz`.
pub fn window_samples(rate_hz: f64, seconds: f64) -> usize {
    libm::round(rate_hz * seconds) as usize
}

/// Non-overlapping consecutive windows; a trailing partial window is dropped.
pub fn segment_windows(samples: &[[f64; 2]], window_samples: usize) -> Result<Vec<VelocityWindow>> {
    if window_samples == 0 {
        bail!(InvalidArgument, "window length must be at least one sample");
    }
    Ok(samples
        .chunks_exact(window_samples)
        .enumerate()
        .map(|(i, chunk)| VelocityWindow {
            window_index: i as u32,
            samples: chunk.to_vec(),
        })
        .collect())
}

/// Per-channel mean and population standard deviation over all non-NaN
/// entries of the training windows.
pub fn fit_standardization(train_windows: &[VelocityWindow]) -> Result<StandardizationStats> {
    let mut count = [0u64; 2];
    let mut mean = [0.0f64; 2];
    let mut m2 = [0.0f64; 2];
    for w in train_windows {
        for s in &w.samples {
            for c in 0..2 {
                let x = s[c];
                if x.is_nan() {
                    continue;
                }
                count[c] += 1;
                let delta = x - mean[c];
                mean[c] += delta / count[c] as f64;
                m2[c] += delta * (x - mean[c]);
            }
        }
    }
    let mut std = [0.0; 2];
    for c in 0..2 {
        if count[c] < 2 {
            bail!(
                Statistics,
                "channel {c} has {} non-NaN values; need at least 2",
                count[c]
            );
        }
        std[c] = libm::sqrt(m2[c] / count[c] as f64);
        if !(std[c] > 0.0) {
            bail!(Statistics, "channel {c} has zero variance");
        }
    }
    Ok(StandardizationStats { mean, std })
}

/// `(v - mean) / std` per channel; NaN stays NaN.
pub fn apply_standardization(windows: &[VelocityWindow], stats: &StandardizationStats) -> Vec<VelocityWindow> {
    windows
        .iter()
        .map(|w| VelocityWindow {
            window_index: w.window_index,
            samples: w
                .samples
                .iter()
                .map(|s| {
                    [
                        (s[0] - stats.mean[0]) / stats.std[0],
                        (s[1] - stats.mean[1]) / stats.std[1],
                    ]
                })
                .collect(),
        })
        .collect()
}

pub fn replace_nan(mut windows: Vec<VelocityWindow>) -> Vec<VelocityWindow> {
    for w in &mut windows {
        for s in &mut w.samples {
            for x in s.iter_mut() {
                if x.is_nan() {
                    *x = 0.0;
                }
            }
        }
    }
    windows
}

/// Standardize, then zero-fill, in that order.
pub fn standardize_and_fill(windows: &[VelocityWindow], stats: &StandardizationStats) -> Vec<VelocityWindow> {
    replace_nan(apply_standardization(windows, stats))
}

/// Preprocessing parameters up to (not including) standardization.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrepConfig {
    pub sg_window: usize,
    pub sg_order: usize,
    pub clamp_deg_s: f64,
    pub window_seconds: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            sg_window: DEFAULT_SG_WINDOW,
            sg_order: DEFAULT_SG_ORDER,
            clamp_deg_s: DEFAULT_CLAMP_DEG_S,
            window_seconds: DEFAULT_WINDOW_SECONDS,
        }
    }
}

/// Output of [`velocity_windows`]: the raw (unstandardized) windows plus
/// the short-input flag from differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRecording {
    pub windows: Vec<VelocityWindow>,
    pub too_short: bool,
}

/// Differentiate, clamp and segment one recording.
pub fn velocity_windows(rec: &GazeRecording, cfg: &PrepConfig) -> Result<PreparedRecording> {
    let vel = differentiate_with(rec, cfg.sg_window, cfg.sg_order)?;
    let clamped = clamp_velocities(&vel.samples, cfg.clamp_deg_s)?;
    let windows = segment_windows(&clamped, window_samples(rec.sample_rate_hz, cfg.window_seconds))?;
    Ok(PreparedRecording {
        windows,
        too_short: vel.too_short,
    })
}

impl VelocityWindow {
    /// Row-major `[h0, v0, h1, v1, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.samples.iter().flat_map(|s| s.iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec_from(h: Vec<f64>, rate: f64) -> GazeRecording {
        let v = vec![0.0; h.len()];
        GazeRecording::new("s", "r", rate, h, v).unwrap()
    }

    /// Independent oracle: 3x3 normal equations for a quadratic fit solved
    /// by Cramer's rule, applied to each unit impulse.
    fn quadratic_slope_oracle(window: usize) -> Vec<f64> {
        let h = (window / 2) as i64;
        let xs: Vec<f64> = (-h..=h).map(|x| x as f64).collect();
        let s = |k: i32| xs.iter().map(|x| x.powi(k)).sum::<f64>();
        let a = [[s(0), s(1), s(2)], [s(1), s(2), s(3)], [s(2), s(3), s(4)]];
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det3(a);
        xs.iter()
            .map(|&x| {
                let rhs = [1.0, x, x * x];
                let mut m = a;
                for r in 0..3 {
                    m[r][1] = rhs[r];
                }
                det3(m) / d
            })
            .collect()
    }

    #[test]
    fn seven_two_coefficients_match_least_squares_oracle() {
        let got = sg_derivative_coeffs(7, 2).unwrap();
        let oracle = quadratic_slope_oracle(7);
        let frozen = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0].map(|k| k / 28.0);
        for i in 0..7 {
            assert!((oracle[i] - frozen[i]).abs() < 1e-15);
            assert!((got[i] - frozen[i]).abs() < 1e-15, "{got:?}");
        }
    }

    #[test]
    fn invalid_filter_parameters() {
        assert!(matches!(sg_derivative_coeffs(6, 2), Err(Error::InvalidArgument(_))));
        assert!(matches!(sg_derivative_coeffs(7, 7), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn higher_order_filter_is_exact_on_cubics() {
        let c = sg_derivative_coeffs(9, 3).unwrap();
        let f = |t: f64| 0.5 * t * t * t - t * t + 3.0;
        let df = |t: f64| 1.5 * t * t - 2.0 * t;
        let t0 = 2.0;
        let d: f64 = (0..9).map(|j| c[j] * f(t0 + j as f64 - 4.0)).sum();
        assert!((d - df(t0)).abs() < 1e-10);
    }

    #[test]
    fn linear_ramp_gives_rate() {
        let rec = rec_from((0..40).map(|i| i as f64).collect(), 72.0);
        let vel = differentiate(&rec);
        for (i, s) in vel.samples.iter().enumerate() {
            if (3..37).contains(&i) {
                assert!((s[0] - 72.0).abs() < 1e-12);
                assert_eq!(s[1], 0.0);
            } else {
                assert!(s[0].is_nan() && s[1].is_nan());
            }
        }
    }

    #[test]
    fn quadratic_derivative_exact() {
        let rec = rec_from((0..10).map(|t| (t * t) as f64).collect(), 1.0);
        let vel = differentiate(&rec);
        for k in 3..7 {
            assert!((vel.samples[k][0] - 2.0 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn nan_propagates_to_windows_containing_it() {
        let mut h: Vec<f64> = (0..20).map(|i| i as f64).collect();
        h[10] = f64::NAN;
        let vel = differentiate(&rec_from(h, 1.0));
        for i in 3..17 {
            assert_eq!(vel.samples[i][0].is_nan(), (7..=13).contains(&i), "sample {i}");
        }
    }

    #[test]
    fn short_recording_is_all_nan_and_flagged() {
        let vel = differentiate(&rec_from(vec![1.0; 6], 72.0));
        assert!(vel.too_short);
        assert!(vel.samples.iter().all(|s| s[0].is_nan()));
    }

    #[test]
    fn clamp_examples() {
        let c = clamp_velocities(&[[1500.0, -999.9], [f64::NAN, -3000.0]], 1000.0).unwrap();
        assert_eq!(c[0], [1000.0, -999.9]);
        assert!(c[1][0].is_nan());
        assert_eq!(c[1][1], -1000.0);
        assert!(clamp_velocities(&c, 0.0).is_err());
    }

    #[test]
    fn segmentation_counts() {
        let s = vec![[0.0, 0.0]; 725];
        let w = segment_windows(&s, 360).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].window_index, 1);
        assert_eq!(segment_windows(&s[..360], 360).unwrap().len(), 1);
        assert!(segment_windows(&s[..359], 360).unwrap().is_empty());
        assert_eq!(window_samples(72.0, 5.0), 360);
    }

    fn window(vals: &[[f64; 2]]) -> VelocityWindow {
        VelocityWindow {
            window_index: 0,
            samples: vals.to_vec(),
        }
    }

    #[test]
    fn standardization_population_convention() {
        let stats = fit_standardization(&[window(&[[-1.0, 2.0], [1.0, 4.0], [f64::NAN, f64::NAN]])]).unwrap();
        assert_eq!(stats.mean, [0.0, 3.0]);
        assert_eq!(stats.std, [1.0, 1.0]);
    }

    #[test]
    fn symmetric_spread_keeps_mean() {
        let c = 7.25;
        let ws: Vec<VelocityWindow> = (0..4)
            .map(|_| window(&[[c, c], [c - 0.5, c + 3.0], [c + 0.5, c - 3.0]]))
            .collect();
        let stats = fit_standardization(&ws).unwrap();
        assert!((stats.mean[0] - c).abs() < 1e-12 && (stats.mean[1] - c).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_channel_is_statistics_error() {
        let err = fit_standardization(&[window(&[[1.0, 0.0], [1.0, 1.0]])]).unwrap_err();
        assert!(matches!(err, Error::Statistics(_)));
    }

    #[test]
    fn standardize_then_fill() {
        let stats = StandardizationStats {
            mean: [10.0, -2.0],
            std: [2.0, 4.0],
        };
        let out = standardize_and_fill(&[window(&[[10.0, f64::NAN], [14.0, 2.0]])], &stats);
        assert_eq!(out[0].samples, vec![[0.0, 0.0], [2.0, 1.0]]);
    }

    fn lcg_values(seed: u64, n: usize) -> Vec<f64> {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((x >> 11) as f64 / (1u64 << 53) as f64) * 200.0 - 100.0
            })
            .collect()
    }

    #[test]
    fn fit_matches_two_pass_oracle() {
        for seed in 0..20u64 {
            let h = lcg_values(seed, 700);
            let v = lcg_values(seed + 1000, 700);
            let mut samples: Vec<[f64; 2]> = h.iter().zip(&v).map(|(a, b)| [*a, *b]).collect();
            samples[5][0] = f64::NAN;
            let ws = segment_windows(&samples, 70).unwrap();
            let stats = fit_standardization(&ws).unwrap();
            for c in 0..2 {
                let vals: Vec<f64> = samples.iter().map(|s| s[c]).filter(|x| !x.is_nan()).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
                assert!((stats.mean[c] - m).abs() < 1e-10);
                assert!((stats.std[c] - var.sqrt()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn training_set_becomes_zero_mean_unit_variance() {
        let samples: Vec<[f64; 2]> = lcg_values(3, 720)
            .chunks(2)
            .map(|c| [c[0] * 3.0 + 5.0, c[1] - 20.0])
            .collect();
        let ws = segment_windows(&samples, 36).unwrap();
        let stats = fit_standardization(&ws).unwrap();
        let z = standardize_and_fill(&ws, &stats);
        for c in 0..2 {
            let vals: Vec<f64> = z.iter().flat_map(|w| w.samples.iter().map(move |s| s[c])).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn coefficients_are_antisymmetric_and_sum_to_zero(half in 1usize..8, order in 1usize..6) {
            let w = 2 * half + 1;
            prop_assume!(order < w);
            let c = sg_derivative_coeffs(w, order).unwrap();
            let sum: f64 = c.iter().sum();
            prop_assert!(sum.abs() < 1e-9);
            for i in 0..w {
                prop_assert!((c[i] + c[w - 1 - i]).abs() < 1e-9);
            }
        }

        #[test]
        fn clamp_is_idempotent(vals in proptest::collection::vec(-5000.0f64..5000.0, 1..50)) {
            let s: Vec<[f64; 2]> = vals.iter().map(|v| [*v, -*v]).collect();
            let once = clamp_velocities(&s, 1000.0).unwrap();
            let twice = clamp_velocities(&once, 1000.0).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.iter().all(|p| p[0].abs() <= 1000.0 && p[1].abs() <= 1000.0));
        }

        #[test]
        fn pipeline_invariants(len in 0usize..2000, amp in 0.1f64..40.0) {
            let h: Vec<f64> = (0..len.max(1)).map(|i| amp * ((i / 50) % 2) as f64 + 0.01 * i as f64).collect();
            let v: Vec<f64> = h.iter().map(|x| -x).collect();
            let rec = GazeRecording::new("s", "r", 72.0, h, v).unwrap();
            let prepared = velocity_windows(&rec, &PrepConfig::default()).unwrap();
            prop_assert_eq!(prepared.windows.len(), rec.len() / 360);
            for (i, w) in prepared.windows.iter().enumerate() {
                prop_assert_eq!(w.window_index as usize, i);
                prop_assert_eq!(w.samples.len(), 360);
                for s in &w.samples {
                    prop_assert!(s[0].is_nan() || s[0].abs() <= 1000.0);
                }
            }
            let stats = StandardizationStats { mean: [0.5, -0.5], std: [2.0, 2.0] };
            let filled = standardize_and_fill(&prepared.windows, &stats);
            prop_assert!(filled.iter().all(|w| w.samples.iter().all(|s| !s[0].is_nan() && !s[1].is_nan())));
        }
    }
}
