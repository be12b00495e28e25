use super::labels::SceneLabels;
use super::loss::center_loss;
use super::recursive::GradientField;
use crate::cp::{cp_step, init_one_hot_with};
use crate::error::{Error, Result};
use crate::lattice::{normalize_field, Lattice, Slot};

/// Mean centre loss after `steps` unpruned propagation steps from one-hot.
pub fn unrolled_center_loss(lattice: &Lattice, logits: &[[f64; 5]], labels: &SceneLabels, steps: usize) -> Result<f64> {
    let field = normalize_field(lattice, logits.to_vec())?;
    let mut state = init_one_hot_with(lattice, 0.0);
    for _ in 0..steps {
        state = cp_step(lattice, &field, &state)?;
    }
    Ok(center_loss(&state, labels)?.mean)
}

/// Central-difference gradient of the mean centre loss with respect to
/// every existing logit. Masked slots stay zero.
pub fn finite_difference_grad(
    lattice: &Lattice,
    logits: &[[f64; 5]],
    labels: &SceneLabels,
    steps: usize,
    h: f64,
) -> Result<GradientField> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    let mut work = logits.to_vec();
    let mut out = vec![[0.0; 5]; lattice.node_count()];
    for i in 0..lattice.node_count() {
        for slot in Slot::ALL {
            if !lattice.slot_exists(i, slot) {
                continue;
            }
            let k = slot.index();
            let z = work[i][k];
            work[i][k] = z + h;
            let up = unrolled_center_loss(lattice, &work, labels, steps)?;
            work[i][k] = z - h;
            let down = unrolled_center_loss(lattice, &work, labels, steps)?;
            work[i][k] = z;
            out[i][k] = (up - down) / (2.0 * h);
        }
    }
    GradientField::new(lattice, out)
}
