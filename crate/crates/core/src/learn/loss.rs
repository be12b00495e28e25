use serde::{Deserialize, Serialize};

use super::labels::SceneLabels;
use crate::cp::ConfidenceState;
use crate::error::{Error, Result};
use crate::geometry::BoxGeometry;
use crate::lattice::Lattice;

/// Lower clamp applied before every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

pub fn safe_ln(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

/// Per-node centre loss and its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterLoss {
    pub per_node: Vec<f64>,
    pub mean: f64,
}

/// Cross-entropy of each node's confidence map against its centre labels.
pub fn center_loss(state: &ConfidenceState, labels: &SceneLabels) -> Result<CenterLoss> {
    let n = labels.lattice().node_count();
    if state.lattice() != labels.lattice() {
        return Err(Error::LatticeMismatch("center_loss: state and labels differ".into()));
    }
    let per_node: Vec<f64> = (0..n)
        .map(|i| {
            labels.center_labels[i]
                .iter()
                .map(|&(j, w)| -w * safe_ln(state.get(i, j)))
                .sum()
        })
        .collect();
    let mean = per_node.iter().sum::<f64>() / n as f64;
    Ok(CenterLoss { per_node, mean })
}

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Derivative of [`smooth_l1`].
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Geometry residuals: distances in units of the lattice factor, angle in radians.
pub fn box_residuals(pred: &BoxGeometry, target: &BoxGeometry, factor: f64) -> [f64; 5] {
    let p = pred.to_array();
    let t = target.to_array();
    [
        (p[0] - t[0]) / factor,
        (p[1] - t[1]) / factor,
        (p[2] - t[2]) / factor,
        (p[3] - t[3]) / factor,
        p[4] - t[4],
    ]
}

/// Components of the multi-task loss, each a mean over all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_fg: f64,
    pub l_center: f64,
    pub l_box: f64,
    pub alpha: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.l_fg.is_finite() && self.l_center.is_finite() && self.l_box.is_finite() && self.total.is_finite()
    }
}

/// Foreground cross-entropy, centre loss and masked smooth-L1 box loss,
/// combined as `l_fg + alpha * l_center + beta * l_box`.
pub fn total_loss(
    lattice: &Lattice,
    fg_pred: &[[f64; 2]],
    state: &ConfidenceState,
    box_preds: &[BoxGeometry],
    labels: &SceneLabels,
    alpha: f64,
    beta: f64,
) -> Result<LossReport> {
    let n = lattice.node_count();
    if labels.lattice() != lattice || state.lattice() != lattice {
        return Err(Error::LatticeMismatch("total_loss: inputs belong to different lattices".into()));
    }
    if fg_pred.len() != n || box_preds.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} nodes but {} foreground and {} box predictions",
            fg_pred.len(),
            box_preds.len()
        )));
    }
    let inv_n = 1.0 / n as f64;
    let l_fg = (0..n)
        .map(|i| -safe_ln(fg_pred[i][usize::from(labels.fg_mask[i])]))
        .sum::<f64>()
        * inv_n;
    let l_center = center_loss(state, labels)?.mean;
    let factor = lattice.factor() as f64;
    let l_box = (0..n)
        .filter_map(|i| labels.box_targets[i].map(|t| (i, t)))
        .map(|(i, t)| box_residuals(&box_preds[i], &t, factor).iter().map(|&r| smooth_l1(r)).sum::<f64>())
        .sum::<f64>()
        * inv_n;
    Ok(LossReport {
        l_fg,
        l_center,
        l_box,
        alpha,
        beta,
        total: l_fg + alpha * l_center + beta * l_box,
    })
}
