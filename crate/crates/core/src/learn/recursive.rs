//! Ring-by-ring confidence tracking and gradients of the centre loss with
//! respect to the normalized field weights.

use super::labels::{CenterEntry, CenterSet, SceneLabels};
use super::loss::{safe_ln, LOG_FLOOR};
use crate::cp::ConfidenceState;
use crate::error::{Error, Result};
use crate::lattice::{CorrelationField, Lattice, Slot};

/// Derivatives of a loss with respect to the five weights of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    lattice: Lattice,
    values: Vec<[f64; 5]>,
}

impl GradientField {
    pub fn new(lattice: &Lattice, values: Vec<[f64; 5]>) -> Result<GradientField> {
        if values.len() != lattice.node_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradient rows for {} nodes",
                values.len(),
                lattice.node_count()
            )));
        }
        let mut values = values;
        for (i, row) in values.iter_mut().enumerate() {
            for slot in Slot::DIRECTIONS {
                if !lattice.slot_exists(i, slot) {
                    row[slot.index()] = 0.0;
                }
            }
        }
        Ok(GradientField { lattice: *lattice, values })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[[f64; 5]] {
        &self.values
    }

    pub fn scaled(&self, k: f64) -> GradientField {
        GradientField {
            lattice: self.lattice,
            values: self.values.iter().map(|r| r.map(|v| v * k)).collect(),
        }
    }

    /// Chain rule through the masked softmax: `dz_a = s_a (g_a - sum_b s_b g_b)`.
    pub fn to_logit_space(&self, field: &CorrelationField) -> Result<GradientField> {
        if field.lattice() != &self.lattice {
            return Err(Error::LatticeMismatch("gradient and field differ".into()));
        }
        let values = self
            .values
            .iter()
            .zip(field.weights())
            .map(|(g, s)| {
                let dot: f64 = (0..5).map(|k| s[k] * g[k]).sum();
                std::array::from_fn(|k| s[k] * (g[k] - dot))
            })
            .collect();
        GradientField::new(&self.lattice, values)
    }
}

/// What a single centre's pass writes into the gradient field.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterContribution {
    pub center: usize,
    /// Ring-node confidences in `center`, in visiting order.
    pub confidences: Vec<(usize, f64)>,
    /// Values assigned to the SELF gradient of ring nodes.
    pub self_assignments: Vec<(usize, f64)>,
    /// Terms added to the neighbour-slot gradients of ring nodes.
    pub neighbor_terms: Vec<(usize, [f64; 5])>,
}

/// Output of [`recursive_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveGradients {
    /// Each node's confidence in each of its labelled centres.
    pub confidences: ConfidenceState,
    /// Gradient of the summed (not averaged) centre loss in weight space.
    pub gradients: GradientField,
    pub center_loss: Vec<f64>,
    pub touch_count: usize,
    pub contributions: Vec<CenterContribution>,
}

fn center_pass(lattice: &Lattice, field: &CorrelationField, labels: &SceneLabels, entry: &CenterEntry) -> CenterContribution {
    let j = entry.center;
    let mut value = vec![0.0; lattice.node_count()];
    value[j] = 1.0;
    let mut out = CenterContribution {
        center: j,
        confidences: Vec::with_capacity(entry.coverage.len()),
        self_assignments: Vec::with_capacity(entry.coverage.len()),
        neighbor_terms: Vec::with_capacity(entry.coverage.len()),
    };
    for ring in &entry.rings {
        // Ring nodes are never adjacent to each other, so updating in place
        // only reads values from the previous ring.
        for &i in ring {
            let s = field.weights()[i];
            let prev_i = value[i];
            let mut c = s[Slot::SelfLoop.index()] * prev_i;
            for (slot, n) in lattice.neighbors_iter(i) {
                c += s[slot.index()] * value[n];
            }
            let m = labels.weight(i, j);
            let denom = c.max(LOG_FLOOR);
            let mut terms = [0.0; 5];
            for (slot, n) in lattice.neighbors_iter(i) {
                terms[slot.index()] = -m * value[n] / denom;
            }
            value[i] = c;
            out.confidences.push((i, c));
            out.self_assignments.push((i, -m * prev_i / denom));
            out.neighbor_terms.push((i, terms));
        }
    }
    out
}

/// Tracks every centre's confidence outward ring by ring inside its
/// coverage and accumulates the centre-loss gradient on the way.
///
/// Gradients start at `-1/s_SELF` on the SELF slot and zero elsewhere. Each
/// ring node then has its SELF gradient replaced and its neighbour-slot
/// gradients incremented, centre by centre in ascending id order.
pub fn recursive_gradients(
    lattice: &Lattice,
    field: &CorrelationField,
    labels: &SceneLabels,
    centers: &CenterSet,
) -> Result<RecursiveGradients> {
    if field.lattice() != lattice || labels.lattice() != lattice {
        return Err(Error::LatticeMismatch("recursive_gradients: inputs differ".into()));
    }
    for e in &centers.entries {
        lattice.check_node(e.center)?;
        if !labels.fg_mask[e.center] {
            return Err(Error::CenterNotForeground { center: e.center });
        }
    }

    #[cfg(feature = "parallel")]
    let contributions: Vec<CenterContribution> = {
        use rayon::prelude::*;
        centers
            .entries
            .par_iter()
            .map(|e| center_pass(lattice, field, labels, e))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let contributions: Vec<CenterContribution> = centers
        .entries
        .iter()
        .map(|e| center_pass(lattice, field, labels, e))
        .collect();

    let n = lattice.node_count();
    let self_idx = Slot::SelfLoop.index();
    let mut grads: Vec<[f64; 5]> = field
        .weights()
        .iter()
        .map(|s| {
            let mut g = [0.0; 5];
            g[self_idx] = -1.0 / s[self_idx].max(LOG_FLOOR);
            g
        })
        .collect();
    let mut tracked: Vec<Vec<(usize, f64)>> = (0..n).map(|_| Vec::new()).collect();
    for c in &contributions {
        for &(i, v) in &c.self_assignments {
            grads[i][self_idx] = v;
        }
        for (i, t) in &c.neighbor_terms {
            for k in 0..5 {
                if k != self_idx {
                    grads[*i][k] += t[k];
                }
            }
        }
        for &(i, v) in &c.confidences {
            tracked[i].push((c.center, v));
        }
    }
    // Labels a node carries on itself are tracked at their one-step value.
    for (i, map) in labels.center_labels.iter().enumerate() {
        if map.iter().any(|&(j, _)| j == i) {
            tracked[i].push((i, field.weights()[i][self_idx]));
        }
    }
    let confidences = ConfidenceState::from_entries(lattice, tracked, 0, 0.0)?;
    let center_loss = labels
        .center_labels
        .iter()
        .enumerate()
        .map(|(i, map)| map.iter().map(|&(j, w)| -w * safe_ln(confidences.get(i, j))).sum())
        .collect();
    Ok(RecursiveGradients {
        confidences,
        gradients: GradientField::new(lattice, grads)?,
        center_loss,
        touch_count: centers.touch_count(),
        contributions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::normalize_field;

    #[test]
    fn two_node_example() {
        let lat = Lattice::grid(1, 2, 1).unwrap();
        let field = CorrelationField::from_weights(&lat, vec![[0.5, 0.0, 0.0, 0.0, 0.5], [0.5, 0.0, 0.0, 0.5, 0.0]]).unwrap();
        let labels = SceneLabels::from_coverage(&lat, &[(1, vec![0, 1])]).unwrap();
        let centers = CenterSet::from_labels(&labels).unwrap();
        let r = recursive_gradients(&lat, &field, &labels, &centers).unwrap();
        assert_eq!(r.confidences.get(0, 1), 0.5);
        assert_eq!(r.gradients.values()[0][Slot::Right.index()], -2.0);
        assert_eq!(r.gradients.values()[0][Slot::SelfLoop.index()], 0.0);
        assert_eq!(r.gradients.values()[1][Slot::SelfLoop.index()], -2.0);
        assert_eq!(r.touch_count, 1);
    }

    #[test]
    fn masked_slots_have_zero_gradient() {
        let lat = Lattice::grid(3, 3, 1).unwrap();
        let field = normalize_field(&lat, vec![[0.3, -0.2, 0.1, 0.4, -0.5]; 9]).unwrap();
        let labels = SceneLabels::from_coverage(&lat, &[(4, (0..9).collect())]).unwrap();
        let centers = CenterSet::from_labels(&labels).unwrap();
        let r = recursive_gradients(&lat, &field, &labels, &centers).unwrap();
        assert_eq!(r.touch_count, 8);
        for (i, g) in r.gradients.values().iter().enumerate() {
            for slot in Slot::DIRECTIONS {
                if !lat.slot_exists(i, slot) {
                    assert_eq!(g[slot.index()], 0.0);
                }
            }
            assert!(g.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn background_only_gradient_is_inverse_self_weight() {
        let lat = Lattice::grid(2, 2, 1).unwrap();
        let field = normalize_field(&lat, vec![[1.0, 0.0, 0.5, 0.2, 0.0]; 4]).unwrap();
        let labels = SceneLabels::background(&lat);
        let centers = CenterSet::from_labels(&labels).unwrap();
        let r = recursive_gradients(&lat, &field, &labels, &centers).unwrap();
        for i in 0..4 {
            let s = field.weights()[i][0];
            assert_eq!(r.gradients.values()[i][0], -1.0 / s);
            assert_eq!(r.center_loss[i], -s.ln());
        }
    }
}
