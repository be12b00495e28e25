use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::labels::{CenterSet, SceneLabels};
use super::loss::{box_residuals, safe_ln, smooth_l1, smooth_l1_grad, LossReport};
use super::recursive::recursive_gradients;
use crate::cp::{cp_run, extract_centers, init_one_hot, ClusterAssignment};
use crate::error::{Error, Result};
use crate::geometry::BoxGeometry;
use crate::gps::{gps_cluster, DEFAULT_MERGE_DISTANCE};
use crate::lattice::{normalize_field, CorrelationField, Lattice, Slot, MASKED_LOGIT};

/// Gradient-descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub iters: usize,
    pub seed: u64,
    /// Half-width of the uniform noise added to the initial logits.
    pub init_noise: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            beta: 1.0,
            lr: 0.5,
            iters: 200,
            seed: 0,
            init_noise: 0.01,
        }
    }
}

/// Directly parameterised per-node outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub lattice: Lattice,
    pub field_logits: Vec<[f64; 5]>,
    /// `[background, foreground]` logits.
    pub fg_logits: Vec<[f64; 2]>,
    /// Side distances in units of the lattice factor, then the angle.
    pub geometry: Vec<[f64; 5]>,
}

fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e = [(z[0] - m).exp(), (z[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

impl TrainedModel {
    pub fn init(lattice: &Lattice, seed: u64, noise: f64) -> TrainedModel {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut jitter = || if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 };
        let n = lattice.node_count();
        let mut field_logits = Vec::with_capacity(n);
        let mut fg_logits = Vec::with_capacity(n);
        let mut geometry = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = [0.0; 5];
            for slot in Slot::ALL {
                row[slot.index()] = if lattice.slot_exists(i, slot) { jitter() } else { MASKED_LOGIT };
            }
            field_logits.push(row);
            fg_logits.push([jitter(), jitter()]);
            geometry.push([1.0 + jitter(), 1.0 + jitter(), 1.0 + jitter(), 1.0 + jitter(), jitter()]);
        }
        TrainedModel {
            lattice: *lattice,
            field_logits,
            fg_logits,
            geometry,
        }
    }

    pub fn field(&self) -> Result<CorrelationField> {
        normalize_field(&self.lattice, self.field_logits.clone())
    }

    pub fn fg_distribution(&self) -> Vec<[f64; 2]> {
        self.fg_logits.iter().map(|&z| softmax2(z)).collect()
    }

    pub fn fg_prob(&self) -> Vec<f64> {
        self.fg_distribution().iter().map(|p| p[1]).collect()
    }

    pub fn fg_mask(&self) -> Vec<bool> {
        self.fg_prob().iter().map(|&p| p > 0.5).collect()
    }

    /// Geometry predictions in pixels.
    pub fn box_predictions(&self) -> Vec<BoxGeometry> {
        let d = self.lattice.factor() as f64;
        self.geometry
            .iter()
            .map(|g| BoxGeometry::from_array([g[0] * d, g[1] * d, g[2] * d, g[3] * d, g[4]]))
            .collect()
    }
}

/// Result of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// Loss before the first update and after each update.
    pub trace: Vec<LossReport>,
    pub assignment: ClusterAssignment,
}

struct Step {
    report: LossReport,
    field_grad: Vec<[f64; 5]>,
    fg_grad: Vec<[f64; 2]>,
    geo_grad: Vec<[f64; 5]>,
}

fn evaluate(model: &TrainedModel, labels: &SceneLabels, centers: &CenterSet, cfg: &TrainConfig) -> Result<Step> {
    let lattice = &model.lattice;
    let n = lattice.node_count();
    let inv_n = 1.0 / n as f64;
    let d = lattice.factor() as f64;
    let field = model.field()?;

    let rec = recursive_gradients(lattice, &field, labels, centers)?;
    let l_center = rec.center_loss.iter().sum::<f64>() * inv_n;
    let field_grad = rec.gradients.to_logit_space(&field)?.scaled(cfg.alpha).values().to_vec();

    let probs = model.fg_distribution();
    let mut l_fg = 0.0;
    let mut fg_grad = Vec::with_capacity(n);
    for (i, p) in probs.iter().enumerate() {
        let target = usize::from(labels.fg_mask[i]);
        l_fg -= safe_ln(p[target]);
        let mut g = *p;
        g[target] -= 1.0;
        fg_grad.push(g);
    }
    l_fg *= inv_n;

    let preds = model.box_predictions();
    let mut l_box = 0.0;
    let mut geo_grad = vec![[0.0; 5]; n];
    for i in 0..n {
        if let Some(t) = labels.box_targets[i] {
            let r = box_residuals(&preds[i], &t, d);
            for k in 0..5 {
                l_box += smooth_l1(r[k]);
                geo_grad[i][k] = cfg.beta * smooth_l1_grad(r[k]);
            }
        }
    }
    l_box *= inv_n;

    Ok(Step {
        report: LossReport {
            l_fg,
            l_center,
            l_box,
            alpha: cfg.alpha,
            beta: cfg.beta,
            total: l_fg + cfg.alpha * l_center + cfg.beta * l_box,
        },
        field_grad,
        fg_grad,
        geo_grad,
    })
}

/// Fits per-node field logits, foreground logits and geometry outputs to
/// the labels by plain gradient descent.
///
/// Each parameter moves by `lr` times the gradient of its own node's loss
/// terms, so the step size does not depend on the lattice size.
pub fn train(lattice: &Lattice, labels: &SceneLabels, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.iters == 0 {
        return Err(Error::InvalidArgument("iters must be at least 1".into()));
    }
    if !(cfg.lr >= 0.0) || !cfg.lr.is_finite() {
        return Err(Error::InvalidArgument(format!("learning rate must be non-negative, got {}", cfg.lr)));
    }
    if labels.lattice() != lattice {
        return Err(Error::LatticeMismatch("train: labels belong to another lattice".into()));
    }
    let centers = CenterSet::from_labels(labels)?;
    let mut model = TrainedModel::init(lattice, cfg.seed, cfg.init_noise);
    let mut trace = Vec::with_capacity(cfg.iters + 1);
    for it in 0..=cfg.iters {
        let step = evaluate(&model, labels, &centers, cfg)?;
        if !step.report.is_finite() {
            return Err(Error::DivergedLoss {
                iteration: it,
                trace: trace.iter().map(|r: &LossReport| r.total).collect(),
            });
        }
        log::debug!("iter {it}: total {:.6}", step.report.total);
        trace.push(step.report);
        if it == cfg.iters {
            break;
        }
        for i in 0..lattice.node_count() {
            for slot in Slot::ALL {
                if lattice.slot_exists(i, slot) {
                    model.field_logits[i][slot.index()] -= cfg.lr * step.field_grad[i][slot.index()];
                }
            }
            for k in 0..2 {
                model.fg_logits[i][k] -= cfg.lr * step.fg_grad[i][k];
            }
            for k in 0..5 {
                model.geometry[i][k] -= cfg.lr * step.geo_grad[i][k];
            }
        }
    }
    let field = model.field()?;
    let fg = model.fg_mask();
    let assignment = match gps_cluster(lattice, &field, &fg, DEFAULT_MERGE_DISTANCE) {
        Ok(m) => m.assignment(),
        // A barely trained field can tie into greedy cycles; propagation
        // still yields an assignment there.
        Err(Error::CycleDetected { node, .. }) => {
            log::warn!("greedy path from node {node} cycles; assigning by propagation");
            let run = cp_run(lattice, &field, &init_one_hot(lattice), lattice.diameter().max(1), 0.0)?;
            extract_centers(&run.state, &fg, 0.0)?
        }
        Err(e) => return Err(e),
    };
    Ok(TrainOutcome { model, trace, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrientedBox;
    use crate::learn::label_scene;

    fn one_box_scene() -> (Lattice, SceneLabels) {
        let lat = Lattice::grid(5, 5, 16).unwrap();
        let b = OrientedBox::new(40.0, 40.0, 48.0, 48.0, 0.0).unwrap();
        let labels = label_scene(&lat, &[b]).unwrap();
        (lat, labels)
    }

    #[test]
    fn loss_halves_on_one_box() {
        let (lat, labels) = one_box_scene();
        let out = train(&lat, &labels, &TrainConfig::default()).unwrap();
        assert_eq!(out.trace.len(), 201);
        let (first, last) = (out.trace[0].total, out.trace[200].total);
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn zero_learning_rate_keeps_everything() {
        let (lat, labels) = one_box_scene();
        let cfg = TrainConfig { lr: 0.0, iters: 5, ..TrainConfig::default() };
        let out = train(&lat, &labels, &cfg).unwrap();
        assert!(out.trace.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(out.model, TrainedModel::init(&lat, cfg.seed, cfg.init_noise));
    }

    #[test]
    fn same_seed_same_trace() {
        let (lat, labels) = one_box_scene();
        let cfg = TrainConfig { iters: 20, seed: 7, ..TrainConfig::default() };
        let a = train(&lat, &labels, &cfg).unwrap();
        let b = train(&lat, &labels, &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn huge_learning_rate_diverges_or_stays_finite() {
        let (lat, labels) = one_box_scene();
        let cfg = TrainConfig { lr: f64::MAX, iters: 3, ..TrainConfig::default() };
        match train(&lat, &labels, &cfg) {
            Err(Error::DivergedLoss { iteration, trace }) => assert_eq!(trace.len(), iteration),
            Ok(out) => assert!(out.trace.iter().all(|r| r.is_finite())),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
