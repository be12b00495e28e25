//! Supervision and learning: scene labels, the multi-task loss, the
//! recursive centre-loss gradient, a finite-difference check and a small
//! gradient-descent trainer over per-node parameters.

mod fd;
mod labels;
mod loss;
mod recursive;
mod train;

pub use fd::{finite_difference_grad, unrolled_center_loss};
pub use labels::{
    box_coverage, box_in_bounds, center_node, label_scene, CenterEntry, CenterSet, Instance, SceneLabels,
};
pub use loss::{
    box_residuals, center_loss, safe_ln, smooth_l1, smooth_l1_grad, total_loss, CenterLoss, LossReport, LOG_FLOOR,
};
pub use recursive::{recursive_gradients, CenterContribution, GradientField, RecursiveGradients};
pub use train::{train, TrainConfig, TrainOutcome, TrainedModel};
