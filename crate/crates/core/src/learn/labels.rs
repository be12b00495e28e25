use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{encode_geometry, BoxGeometry, OrientedBox};
use crate::lattice::Lattice;

/// Tolerance, in pixels, for boxes touching the image border.
const BOUNDS_EPS: f64 = 1e-9;

/// One labelled instance: its box (if any), centre node and covered nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub box_index: Option<usize>,
    pub bbox: Option<OrientedBox>,
    pub center: usize,
    /// Covered nodes, ascending.
    pub coverage: Vec<usize>,
}

/// Per-node supervision derived from ground-truth boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneLabels {
    lattice: Lattice,
    pub fg_mask: Vec<bool>,
    /// Sorted `(center, weight)` pairs per node.
    pub center_labels: Vec<Vec<(usize, f64)>>,
    /// Geometry target of the nearest covering instance, foreground only.
    pub box_targets: Vec<Option<BoxGeometry>>,
    pub instances: Vec<Instance>,
    /// Indices of input boxes that covered no node.
    pub skipped_boxes: Vec<usize>,
}

/// Nodes whose pixel centre lies inside `bbox`, ascending.
pub fn box_coverage(lattice: &Lattice, bbox: &OrientedBox) -> Vec<usize> {
    let (x0, y0, x1, y1) = bbox.bounds();
    let d = lattice.factor() as f64;
    let clamp_idx = |v: f64, hi: usize| -> usize { (v.max(0.0) as usize).min(hi) };
    let c0 = clamp_idx((x0 / d - 0.5).floor(), lattice.cols() - 1);
    let c1 = clamp_idx((x1 / d - 0.5).ceil(), lattice.cols() - 1);
    let r0 = clamp_idx((y0 / d - 0.5).floor(), lattice.rows() - 1);
    let r1 = clamp_idx((y1 / d - 0.5).ceil(), lattice.rows() - 1);
    let mut out = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            let n = lattice.index(r, c);
            let (x, y) = lattice.pixel_center(n);
            if bbox.contains(x, y) {
                out.push(n);
            }
        }
    }
    out
}

/// Covered node closest to the box centre; ties go to the smaller id.
pub fn center_node(lattice: &Lattice, bbox: &OrientedBox, coverage: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &n in coverage {
        let (x, y) = lattice.pixel_center(n);
        let d2 = (x - bbox.cx).powi(2) + (y - bbox.cy).powi(2);
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((n, d2));
        }
    }
    best.map(|(n, _)| n)
}

pub fn box_in_bounds(lattice: &Lattice, bbox: &OrientedBox) -> bool {
    let (x0, y0, x1, y1) = bbox.bounds();
    x0 >= -BOUNDS_EPS
        && y0 >= -BOUNDS_EPS
        && x1 <= lattice.width_px() as f64 + BOUNDS_EPS
        && y1 <= lattice.height_px() as f64 + BOUNDS_EPS
}

/// Labels every node from a set of ground-truth boxes. Boxes that cover no
/// node are listed in `skipped_boxes` and otherwise ignored.
pub fn label_scene(lattice: &Lattice, gt_boxes: &[OrientedBox]) -> Result<SceneLabels> {
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    for (index, bbox) in gt_boxes.iter().enumerate() {
        if !box_in_bounds(lattice, bbox) {
            return Err(Error::BoxOutOfBounds { index });
        }
        let coverage = box_coverage(lattice, bbox);
        match center_node(lattice, bbox, &coverage) {
            Some(center) => instances.push(Instance {
                box_index: Some(index),
                bbox: Some(*bbox),
                center,
                coverage,
            }),
            None => {
                log::warn!("{}", Error::EmptyBox { index });
                skipped.push(index);
            }
        }
    }
    SceneLabels::build(lattice, instances, skipped)
}

impl SceneLabels {
    /// Labels from explicit `(center, coverage)` pairs, without box targets.
    pub fn from_coverage(lattice: &Lattice, groups: &[(usize, Vec<usize>)]) -> Result<SceneLabels> {
        let mut instances = Vec::with_capacity(groups.len());
        for (center, coverage) in groups {
            lattice.check_node(*center)?;
            let mut coverage = coverage.clone();
            for &n in &coverage {
                lattice.check_node(n)?;
            }
            coverage.sort_unstable();
            coverage.dedup();
            if coverage.binary_search(center).is_err() {
                return Err(Error::CenterNotForeground { center: *center });
            }
            instances.push(Instance {
                box_index: None,
                bbox: None,
                center: *center,
                coverage,
            });
        }
        SceneLabels::build(lattice, instances, Vec::new())
    }

    /// Every node labelled as its own centre.
    pub fn background(lattice: &Lattice) -> SceneLabels {
        SceneLabels::build(lattice, Vec::new(), Vec::new()).expect("empty scene labels")
    }

    fn build(lattice: &Lattice, instances: Vec<Instance>, skipped_boxes: Vec<usize>) -> Result<SceneLabels> {
        let n = lattice.node_count();
        let mut covering: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, inst) in instances.iter().enumerate() {
            for &node in &inst.coverage {
                covering[node].push(k);
            }
        }
        let mut fg_mask = vec![false; n];
        let mut center_labels = Vec::with_capacity(n);
        let mut box_targets = vec![None; n];
        for node in 0..n {
            let cov = &covering[node];
            if cov.is_empty() {
                center_labels.push(vec![(node, 1.0)]);
                continue;
            }
            fg_mask[node] = true;
            let w = 1.0 / cov.len() as f64;
            let mut map: BTreeMap<usize, f64> = BTreeMap::new();
            for &k in cov {
                *map.entry(instances[k].center).or_insert(0.0) += w;
            }
            center_labels.push(map.into_iter().collect());
            let primary = cov
                .iter()
                .copied()
                .min_by_key(|&k| (lattice.manhattan(node, instances[k].center), instances[k].center, k))
                .expect("non-empty coverage");
            if let Some(b) = &instances[primary].bbox {
                box_targets[node] = Some(encode_geometry(lattice.pixel_center(node), b));
            }
        }
        for inst in &instances {
            if !fg_mask[inst.center] {
                return Err(Error::CenterNotForeground { center: inst.center });
            }
        }
        Ok(SceneLabels {
            lattice: *lattice,
            fg_mask,
            center_labels,
            box_targets,
            instances,
            skipped_boxes,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Label weight of `center` at `node`.
    pub fn weight(&self, node: usize, center: usize) -> f64 {
        let map = &self.center_labels[node];
        map.binary_search_by_key(&center, |&(j, _)| j)
            .map(|k| map[k].1)
            .unwrap_or(0.0)
    }

    /// Labelled centre nearest to a foreground node (Manhattan distance,
    /// ties to the smaller id).
    pub fn primary_center(&self, node: usize) -> Option<usize> {
        if !self.fg_mask[node] {
            return None;
        }
        self.center_labels[node]
            .iter()
            .map(|&(j, _)| j)
            .min_by_key(|&j| (self.lattice.manhattan(node, j), j))
    }

    /// Distinct instance centres, ascending.
    pub fn centers(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.instances.iter().map(|i| i.center).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn foreground_count(&self) -> usize {
        self.fg_mask.iter().filter(|&&f| f).count()
    }
}

/// A centre, its coverage and the Manhattan rings partitioning that coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterEntry {
    pub center: usize,
    pub coverage: Vec<usize>,
    /// `rings[k - 1]` lists covered nodes at Manhattan distance `k`, ascending.
    pub rings: Vec<Vec<usize>>,
}

impl CenterEntry {
    pub fn max_ring(&self) -> usize {
        self.rings.len()
    }
}

/// Centres in ascending id order with their coverage rings.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet {
    pub entries: Vec<CenterEntry>,
}

impl CenterSet {
    /// Coverage of centre `j` is every foreground node carrying a label on `j`.
    pub fn from_labels(labels: &SceneLabels) -> Result<CenterSet> {
        let lattice = labels.lattice();
        let mut coverage: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (node, map) in labels.center_labels.iter().enumerate() {
            if !labels.fg_mask[node] {
                continue;
            }
            for &(j, _) in map {
                if !labels.fg_mask[j] {
                    return Err(Error::CenterNotForeground { center: j });
                }
                coverage.entry(j).or_default().push(node);
            }
        }
        let entries = coverage
            .into_iter()
            .map(|(center, coverage)| {
                let mut rings: Vec<Vec<usize>> = Vec::new();
                for &node in &coverage {
                    let k = lattice.manhattan(node, center);
                    if k == 0 {
                        continue;
                    }
                    if rings.len() < k {
                        rings.resize(k, Vec::new());
                    }
                    rings[k - 1].push(node);
                }
                CenterEntry { center, coverage, rings }
            })
            .collect();
        Ok(CenterSet { entries })
    }

    pub fn centers(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.center).collect()
    }

    /// Total number of ring-node updates of one recursive pass.
    pub fn touch_count(&self) -> usize {
        self.entries.iter().flat_map(|e| e.rings.iter()).map(Vec::len).sum()
    }
}
