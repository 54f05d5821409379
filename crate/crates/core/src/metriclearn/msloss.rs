//! Multi-similarity loss.
//!
//! For anchor `i` with mined positives `P_i` and negatives `N_i`:
//!
//! ```text
//! L = 1/m * sum_i [ 1/alpha * ln(1 + sum_{k in P_i} exp(-alpha (S_ik - lambda)))
//!                 + 1/beta  * ln(1 + sum_{k in N_i} exp( beta  (S_ik - lambda))) ]
//! ```

use alloc::vec;
use alloc::vec::Vec;

use super::linear::LinearMap;
use super::similarity::{gram, normalize_rows};
use crate::error::{Error, Result};
use crate::math::{axpy, dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MsLossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Miner margin.
    pub epsilon: f64,
    pub use_miner: bool,
}

impl Default for MsLossConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 50.0,
            lambda: 0.5,
            epsilon: 0.1,
            use_miner: true,
        }
    }
}

impl MsLossConfig {
    pub fn without_miner() -> Self {
        Self {
            use_miner: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            bail!(InvalidArgument, "alpha and beta must be positive");
        }
        if !(-1.0..=1.0).contains(&self.lambda) {
            bail!(InvalidArgument, "lambda must lie in [-1, 1], got {}", self.lambda);
        }
        if !(self.epsilon >= 0.0) {
            bail!(InvalidArgument, "epsilon must be non-negative");
        }
        Ok(())
    }
}

/// Square boolean masks over (anchor, other) pairs; the diagonal is never set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMasks {
    n: usize,
    positive: Vec<bool>,
    negative: Vec<bool>,
}

impl PairMasks {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            positive: vec![false; n * n],
            negative: vec![false; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_positive(&self, i: usize, k: usize) -> bool {
        self.positive[i * self.n + k]
    }

    #[inline]
    pub fn is_negative(&self, i: usize, k: usize) -> bool {
        self.negative[i * self.n + k]
    }

    pub fn set_positive(&mut self, i: usize, k: usize, on: bool) {
        self.positive[i * self.n + k] = on;
    }

    pub fn set_negative(&mut self, i: usize, k: usize, on: bool) {
        self.negative[i * self.n + k] = on;
    }

    pub fn count(&self) -> (usize, usize) {
        (
            self.positive.iter().filter(|b| **b).count(),
            self.negative.iter().filter(|b| **b).count(),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.count() == (0, 0)
    }
}

/// Every same-label pair as positive and every cross-label pair as negative.
pub fn all_pairs(labels: &[usize]) -> PairMasks {
    let n = labels.len();
    let mut masks = PairMasks::empty(n);
    for i in 0..n {
        for k in 0..n {
            if i == k {
                continue;
            }
            if labels[i] == labels[k] {
                masks.set_positive(i, k, true);
            } else {
                masks.set_negative(i, k, true);
            }
        }
    }
    masks
}

/// Multi-similarity pair miner.
///
/// A negative is kept when it is more similar than the anchor's hardest
/// positive minus `epsilon`; a positive is kept when it is less similar
/// than the hardest negative plus `epsilon`. Anchors lacking either
/// positives or negatives keep nothing.
pub fn ms_mine_pairs(sim: &Matrix, labels: &[usize], epsilon: f64) -> PairMasks {
    let n = labels.len();
    debug_assert_eq!(sim.rows(), n);
    let mut masks = PairMasks::empty(n);
    for i in 0..n {
        let mut min_pos = f64::INFINITY;
        let mut max_neg = f64::NEG_INFINITY;
        for k in 0..n {
            if k == i {
                continue;
            }
            let s = sim.get(i, k);
            if labels[k] == labels[i] {
                min_pos = min_pos.min(s);
            } else {
                max_neg = max_neg.max(s);
            }
        }
        if min_pos == f64::INFINITY || max_neg == f64::NEG_INFINITY {
            continue;
        }
        for k in 0..n {
            if k == i {
                continue;
            }
            let s = sim.get(i, k);
            if labels[k] == labels[i] {
                masks.set_positive(i, k, s < max_neg + epsilon);
            } else {
                masks.set_negative(i, k, s > min_pos - epsilon);
            }
        }
    }
    masks
}

/// Mined pairs when the miner is enabled, all pairs otherwise.
pub fn select_pairs(sim: &Matrix, labels: &[usize], config: &MsLossConfig) -> PairMasks {
    if config.use_miner {
        ms_mine_pairs(sim, labels, config.epsilon)
    } else {
        all_pairs(labels)
    }
}

/// `ln(1 + sum exp(z))` and the softmax weights `exp(z_k) / (1 + sum exp(z))`,
/// evaluated with a shift so large `beta` cannot overflow.
fn soft_plus_sum(z: &[f64], weights: &mut Vec<f64>) -> f64 {
    weights.clear();
    if z.is_empty() {
        return 0.0;
    }
    let shift = z.iter().copied().fold(0.0f64, f64::max);
    let base = crate::math::exp(-shift);
    let mut total = base;
    for &zk in z {
        let e = crate::math::exp(zk - shift);
        weights.push(e);
        total += e;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    shift + crate::math::ln(total)
}

/// Loss value and `dL/dS` for every entry of the similarity matrix.
pub fn ms_loss_sim_gradient(sim: &Matrix, config: &MsLossConfig, masks: &PairMasks) -> (f64, Matrix) {
    let m = sim.rows();
    let mut grad = Matrix::zeros(m, m);
    if m == 0 {
        return (0.0, grad);
    }
    let inv_m = 1.0 / m as f64;
    let mut total = 0.0;
    let mut z = Vec::new();
    let mut idx = Vec::new();
    let mut w = Vec::new();
    for i in 0..m {
        z.clear();
        idx.clear();
        for k in 0..m {
            if masks.is_positive(i, k) {
                z.push(-config.alpha * (sim.get(i, k) - config.lambda));
                idx.push(k);
            }
        }
        total += soft_plus_sum(&z, &mut w) / config.alpha;
        for (&k, wk) in idx.iter().zip(&w) {
            grad.set(i, k, -wk * inv_m);
        }

        z.clear();
        idx.clear();
        for k in 0..m {
            if masks.is_negative(i, k) {
                z.push(config.beta * (sim.get(i, k) - config.lambda));
                idx.push(k);
            }
        }
        total += soft_plus_sum(&z, &mut w) / config.beta;
        for (&k, wk) in idx.iter().zip(&w) {
            grad.set(i, k, wk * inv_m);
        }
    }
    (total * inv_m, grad)
}

/// Multi-similarity loss over the pairs selected in `masks`.
pub fn ms_loss(sim: &Matrix, labels: &[usize], config: &MsLossConfig, masks: &PairMasks) -> f64 {
    debug_assert_eq!(labels.len(), sim.rows());
    debug_assert!((0..labels.len()).all(|i| (0..labels.len()).all(|k| {
        !(masks.is_positive(i, k) && labels[i] != labels[k]) && !(masks.is_negative(i, k) && labels[i] == labels[k])
    })));
    ms_loss_sim_gradient(sim, config, masks).0
}

/// Loss and parameter gradient for a linear map followed by cosine similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    /// Same shape and layout as the map's weights (`out_dim x in_dim`).
    pub grad: Matrix,
    pub masks: PairMasks,
}

/// Analytic gradient of the multi-similarity loss with respect to the
/// weights of `model`, where similarities are cosines of `model(inputs)`.
///
/// Mined masks are computed at the current parameters and treated as
/// constants (the loss is piecewise smooth in them).
pub fn ms_loss_gradient(
    inputs: &Matrix,
    labels: &[usize],
    model: &LinearMap,
    config: &MsLossConfig,
) -> Result<LossGradient> {
    if inputs.cols() != model.in_dim() {
        return Err(Error::ShapeMismatch {
            expected: model.in_dim(),
            found: inputs.cols(),
        });
    }
    if labels.len() != inputs.rows() {
        return Err(Error::ShapeMismatch {
            expected: inputs.rows(),
            found: labels.len(),
        });
    }
    let outputs = model.forward(inputs);
    let (unit, norms) = normalize_rows(&outputs)?;
    let sim = gram(&unit);
    let masks = select_pairs(&sim, labels, config);
    let (loss, g) = ms_loss_sim_gradient(&sim, config, &masks);
    let grad = backprop_linear(inputs, &unit, &norms, &g, model.out_dim());
    Ok(LossGradient { loss, grad, masks })
}

/// Loss and weight gradient for caller-supplied pair masks.
pub fn ms_loss_gradient_with_masks(
    inputs: &Matrix,
    model: &LinearMap,
    config: &MsLossConfig,
    masks: &PairMasks,
) -> Result<(f64, Matrix)> {
    let outputs = model.forward(inputs);
    let (unit, norms) = normalize_rows(&outputs)?;
    let sim = gram(&unit);
    let (loss, g) = ms_loss_sim_gradient(&sim, config, masks);
    Ok((loss, backprop_linear(inputs, &unit, &norms, &g, model.out_dim())))
}

fn backprop_linear(inputs: &Matrix, unit: &Matrix, norms: &[f64], g: &Matrix, out_dim: usize) -> Matrix {
    let m = unit.rows();
    // dL/d(unit_i) = sum_k (G_ik + G_ki) unit_k
    let mut d_unit = Matrix::zeros(m, out_dim);
    for i in 0..m {
        for k in 0..m {
            let gs = g.get(i, k) + g.get(k, i);
            if gs != 0.0 {
                axpy(gs, unit.row(k), d_unit.row_mut(i));
            }
        }
    }
    // Through the normalization: (I - u u^T) d / |f|.
    let mut d_out = d_unit;
    for i in 0..m {
        let u = unit.row(i);
        let proj = dot(d_out.row(i), u);
        let inv = 1.0 / norms[i];
        for (d, uj) in d_out.row_mut(i).iter_mut().zip(u) {
            *d = (*d - proj * uj) * inv;
        }
    }
    let mut grad = Matrix::zeros(out_dim, inputs.cols());
    for i in 0..m {
        let x = inputs.row(i);
        for o in 0..out_dim {
            let c = d_out.get(i, o);
            if c != 0.0 {
                axpy(c, x, grad.row_mut(o));
            }
        }
    }
    grad
}
