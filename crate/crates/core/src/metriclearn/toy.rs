//! Desk-scale run of the full gaze-encoder recipe with a single linear map in
//! place of the convolutional network.

use alloc::vec::Vec;

use super::adam::{AdamConfig, AdamState};
use super::batches::{make_minibatches, MiniBatchSpec};
use super::linear::LinearEncoder;
use super::msloss::{ms_loss_gradient, MsLossConfig};
use super::schedule::OneCycleSchedule;
use crate::error::Result;
use crate::gazeprep::{fit_standardization, standardize_and_fill, StandardizationStats, VelocityWindow};
use crate::math::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrainingOutcome {
    pub encoder: LinearEncoder,
    pub stats: StandardizationStats,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Learning rate used in each epoch.
    pub learning_rates: Vec<f64>,
}

/// Standardize `windows` with statistics fitted on them, flatten, and train a
/// linear encoder with class-balanced batches, the mined multi-similarity
/// loss, Adam and the one-cycle schedule.
pub fn train_toy_encoder(
    windows: &[VelocityWindow],
    labels: &[usize],
    embed_dim: usize,
    spec: MiniBatchSpec,
    schedule: OneCycleSchedule,
    config: MsLossConfig,
    seed: u64,
) -> Result<ToyTrainingOutcome> {
    if windows.len() != labels.len() {
        return Err(crate::Error::ShapeMismatch {
            expected: windows.len(),
            found: labels.len(),
        });
    }
    schedule.validate()?;
    config.validate()?;
    let stats = fit_standardization(windows)?;
    let rows: Vec<Vec<f64>> = standardize_and_fill(windows, &stats).iter().map(VelocityWindow::flatten).collect();
    let x = Matrix::from_rows(&rows)?;
    let mut encoder = LinearEncoder::init_uniform(x.cols(), embed_dim, seed)?;
    let mut adam = AdamState::new(x.cols() * embed_dim, AdamConfig::default());
    let mut epoch_losses = Vec::with_capacity(schedule.total_epochs as usize);
    let mut learning_rates = Vec::with_capacity(schedule.total_epochs as usize);
    for epoch in 0..schedule.total_epochs {
        let lr = schedule.lr(epoch)?;
        let batches = make_minibatches(labels, spec, seed, u64::from(epoch))?;
        let mut total = 0.0;
        for batch in &batches {
            let bx = x.select_rows(batch);
            let bl: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let step = ms_loss_gradient(&bx, &bl, &encoder, &config)?;
            adam.step(encoder.weights_mut(), step.grad.as_slice(), lr)?;
            total += step.loss;
        }
        epoch_losses.push(total / batches.len() as f64);
        learning_rates.push(lr);
    }
    Ok(ToyTrainingOutcome {
        encoder,
        stats,
        epoch_losses,
        learning_rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use alloc::vec;

    #[test]
    fn zero_variance_input_is_a_statistics_error() {
        let windows: Vec<VelocityWindow> = (0..32)
            .map(|i| VelocityWindow {
                window_index: i,
                samples: vec![[1.0, 1.0]; 8],
            })
            .collect();
        let labels: Vec<usize> = (0..32).map(|i| i % 16).collect();
        let r = train_toy_encoder(
            &windows,
            &labels,
            4,
            MiniBatchSpec::default(),
            OneCycleSchedule::default(),
            MsLossConfig::default(),
            1,
        );
        assert!(matches!(r, Err(Error::Statistics(_))));
    }
}
