//! From a field and per-node heads to scored boxes: cluster the foreground
//! with one of the three grouping algorithms, then fit one box per cluster.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cp::{cp_run, extract_centers, init_one_hot_with, ClusterAssignment, ConfidenceState, DEFAULT_PRUNE_EPS, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::geometry::{merge_by_center, nms, pca_box_from_cluster, BoxGeometry, ScoredBox};
use crate::gps::{gps_cluster, TrapMap, DEFAULT_MERGE_DISTANCE};
use crate::lattice::{CorrelationField, Lattice};
use crate::learn::{SceneLabels, TrainedModel};
use crate::mcl::{build_flow_matrix, mc_clusters, mc_iterate, FlowMatrix, McCounters, DEFAULT_MAX_ITERS, DEFAULT_MC_TOL, DEFAULT_PRUNE_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Cp,
    Gps,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergePath {
    /// Fit a box to the member positions.
    Pca,
    /// Fuse the members' regressed geometries.
    Regress,
}

macro_rules! text_enum {
    ($t:ty, $($name:literal => $v:expr),+) => {
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($v),)+
                    other => Err(Error::InvalidArgument(format!("unknown value '{other}'"))),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self { $(x if *x == $v => $name,)+ _ => unreachable!() };
                f.write_str(name)
            }
        }
    };
}

text_enum!(Algo, "cp" => Algo::Cp, "gps" => Algo::Gps, "mc" => Algo::Mc);
text_enum!(MergePath, "pca" => MergePath::Pca, "regress" => MergePath::Regress);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferConfig {
    pub algo: Algo,
    pub merge: MergePath,
    /// CP step cap; `None` uses the lattice diameter.
    pub cp_max_steps: Option<usize>,
    pub cp_tol: f64,
    pub prune_eps: f64,
    pub min_conf: f64,
    pub merge_distance: f64,
    pub mc_max_iters: usize,
    pub mc_threshold: f64,
    pub mc_tol: f64,
    pub nms_iou: f64,
    pub min_cluster_size: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            algo: Algo::Gps,
            merge: MergePath::Pca,
            cp_max_steps: None,
            cp_tol: DEFAULT_TOL,
            prune_eps: DEFAULT_PRUNE_EPS,
            min_conf: 0.0,
            merge_distance: DEFAULT_MERGE_DISTANCE,
            mc_max_iters: DEFAULT_MAX_ITERS,
            mc_threshold: DEFAULT_PRUNE_THRESHOLD,
            mc_tol: DEFAULT_MC_TOL,
            nms_iou: 0.5,
            min_cluster_size: 1,
        }
    }
}

/// Per-node foreground probability and optional geometry prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Heads {
    pub fg_prob: Vec<f64>,
    pub geometry: Vec<Option<BoxGeometry>>,
}

impl Heads {
    /// Heads that reproduce the labels exactly.
    pub fn from_labels(labels: &SceneLabels) -> Heads {
        Heads {
            fg_prob: labels.fg_mask.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect(),
            geometry: labels.box_targets.clone(),
        }
    }

    pub fn from_model(model: &TrainedModel) -> Heads {
        let geometry = model
            .box_predictions()
            .into_iter()
            .map(|g| {
                let a = g.to_array();
                Some(BoxGeometry::from_array([a[0].max(0.0), a[1].max(0.0), a[2].max(0.0), a[3].max(0.0), a[4]]))
            })
            .collect();
        Heads {
            fg_prob: model.fg_prob(),
            geometry,
        }
    }

    pub fn fg_mask(&self) -> Vec<bool> {
        self.fg_prob.iter().map(|&p| p > 0.5).collect()
    }
}

/// Grouping result with the work figures of the algorithm that ran.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome {
    pub assignment: ClusterAssignment,
    pub cp_steps: Option<usize>,
    pub gps_hops: Option<usize>,
    pub gps_merges: Option<usize>,
    pub mc_counters: Option<McCounters>,
    /// Final propagation state, for `Algo::Cp`.
    pub cp_state: Option<ConfidenceState>,
    /// Trap map after merging, for `Algo::Gps`.
    pub traps: Option<TrapMap>,
    /// Converged flow matrix, for `Algo::Mc`.
    pub flow: Option<FlowMatrix>,
}

pub fn cluster(lattice: &Lattice, field: &CorrelationField, fg_mask: &[bool], cfg: &InferConfig) -> Result<ClusterOutcome> {
    if fg_mask.len() != lattice.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "mask of {} entries for {} nodes",
            fg_mask.len(),
            lattice.node_count()
        )));
    }
    let mut out = ClusterOutcome {
        assignment: ClusterAssignment::default(),
        cp_steps: None,
        gps_hops: None,
        gps_merges: None,
        mc_counters: None,
        cp_state: None,
        traps: None,
        flow: None,
    };
    match cfg.algo {
        Algo::Cp => {
            let steps = cfg.cp_max_steps.unwrap_or(lattice.diameter()).max(1);
            let run = cp_run(lattice, field, &init_one_hot_with(lattice, cfg.prune_eps), steps, cfg.cp_tol)?;
            out.assignment = extract_centers(&run.state, fg_mask, cfg.min_conf)?;
            out.cp_steps = Some(run.steps_used);
            out.cp_state = Some(run.state);
        }
        Algo::Gps => {
            let m = gps_cluster(lattice, field, fg_mask, cfg.merge_distance)?;
            out.gps_hops = Some(m.traps.total_hops());
            out.gps_merges = Some(m.merges.len());
            out.assignment = m.assignment();
            out.traps = Some(m.traps);
        }
        Algo::Mc => {
            let m0 = build_flow_matrix(lattice, field)?;
            let run = mc_iterate(&m0, cfg.mc_max_iters, cfg.mc_threshold, cfg.mc_tol)?;
            out.assignment = mc_clusters(&run.matrix).restrict(fg_mask);
            out.mc_counters = Some(run.counters);
            out.flow = Some(run.matrix);
        }
    }
    Ok(out)
}

/// One box per cluster, then non-maximum suppression.
pub fn assemble(lattice: &Lattice, assignment: &ClusterAssignment, heads: &Heads, cfg: &InferConfig) -> Result<Vec<ScoredBox>> {
    let n = lattice.node_count();
    if heads.fg_prob.len() != n || heads.geometry.len() != n {
        return Err(Error::ShapeMismatch("heads do not match the lattice".into()));
    }
    let kept: ClusterAssignment = ClusterAssignment::from_centers(
        assignment
            .center_of
            .iter()
            .map(|c| c.filter(|c| assignment.clusters[c].len() >= cfg.min_cluster_size))
            .collect(),
    );
    let mut boxes = Vec::with_capacity(kept.clusters.len());
    match cfg.merge {
        MergePath::Pca => {
            for members in kept.clusters.values() {
                let bbox = pca_box_from_cluster(lattice, members)?;
                let score = members.iter().map(|&m| heads.fg_prob[m]).sum::<f64>() / members.len() as f64;
                boxes.push(ScoredBox { bbox, score });
            }
        }
        MergePath::Regress => {
            for m in merge_by_center(lattice, &heads.geometry, &heads.fg_prob, &kept)? {
                boxes.push(ScoredBox { bbox: m.bbox, score: m.score });
            }
        }
    }
    Ok(nms(&boxes, cfg.nms_iou).into_iter().map(|k| boxes[k]).collect())
}

/// [`cluster`] followed by [`assemble`].
pub fn infer(lattice: &Lattice, field: &CorrelationField, heads: &Heads, cfg: &InferConfig) -> Result<(ClusterOutcome, Vec<ScoredBox>)> {
    let c = cluster(lattice, field, &heads.fg_mask(), cfg)?;
    let boxes = assemble(lattice, &c.assignment, heads, cfg)?;
    Ok((c, boxes))
}
