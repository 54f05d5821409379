//! Metric learning: multi-similarity loss with pair mining, its analytic
//! gradient through a linear map, Adam, the one-cycle cosine schedule,
//! class-balanced minibatches, and the two trainers built from them.

mod adam;
mod batches;
mod ef1;
mod linear;
mod msloss;
mod schedule;
mod similarity;
mod toy;

pub use adam::{AdamConfig, AdamState};
pub use batches::{make_minibatches, MiniBatchSpec};
pub use ef1::{fusion_inputs, train_ef1, Ef1Config, Ef1Outcome, FusionSample, TrainingLogEntry, PAPER_OUT_DIMS};
pub use linear::{LinearEncoder, LinearFusionModel, LinearMap};
pub use msloss::{
    all_pairs, ms_loss, ms_loss_gradient, ms_loss_gradient_with_masks, ms_loss_sim_gradient, ms_mine_pairs, select_pairs, LossGradient,
    MsLossConfig, PairMasks,
};
pub use schedule::OneCycleSchedule;
pub use similarity::{cosine_similarity, cosine_similarity_matrix};
pub use toy::{train_toy_encoder, ToyTrainingOutcome};
