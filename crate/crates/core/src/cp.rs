//! Forward correlation propagation.
//!
//! Node `i` keeps a sparse distribution `C_i` over candidate centre nodes.
//! One step replaces it by the weighted sum of its own and its neighbours'
//! previous distributions:
//!
//! ```text
//! C_i^t(j) = s_SELF(i) * C_i^{t-1}(j) + sum_{n in N(i)} s_slot(n)(i) * C_n^{t-1}(j)
//! ```
//!
//! Steps are double buffered: every value at step `t` is read from step `t-1`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::{CorrelationField, Lattice, Slot};

pub const DEFAULT_PRUNE_EPS: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Per-node sparse centre-confidence maps. Each map is a list of
/// `(center, confidence)` pairs sorted by centre id.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceState {
    lattice: Lattice,
    entries: Vec<Vec<(usize, f64)>>,
    step: usize,
    prune_eps: f64,
}

impl ConfidenceState {
    /// State built from explicit per-node maps; entries at or below
    /// `prune_eps` are dropped.
    pub fn from_entries(
        lattice: &Lattice,
        entries: Vec<Vec<(usize, f64)>>,
        step: usize,
        prune_eps: f64,
    ) -> Result<ConfidenceState> {
        if entries.len() != lattice.node_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} confidence maps for {} nodes",
                entries.len(),
                lattice.node_count()
            )));
        }
        let mut cleaned = Vec::with_capacity(entries.len());
        for mut map in entries {
            map.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(map.len());
            for (j, v) in map {
                lattice.check_node(j)?;
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            merged.retain(|&(_, v)| v > prune_eps);
            cleaned.push(merged);
        }
        Ok(ConfidenceState {
            lattice: *lattice,
            entries: cleaned,
            step,
            prune_eps,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn prune_eps(&self) -> f64 {
        self.prune_eps
    }

    /// Sorted `(center, confidence)` pairs of a node.
    pub fn entries(&self, node: usize) -> &[(usize, f64)] {
        &self.entries[node]
    }

    pub fn all_entries(&self) -> &[Vec<(usize, f64)>] {
        &self.entries
    }

    /// Confidence of `node` in `center`, zero when absent.
    pub fn get(&self, node: usize, center: usize) -> f64 {
        let map = &self.entries[node];
        map.binary_search_by_key(&center, |&(j, _)| j)
            .map(|k| map[k].1)
            .unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().flatten().map(|&(_, v)| v).sum()
    }

    pub fn support_size(&self, node: usize) -> usize {
        self.entries[node].len()
    }

    /// Same state with a new pruning threshold applied.
    pub fn with_prune_eps(&self, prune_eps: f64) -> ConfidenceState {
        let entries = self
            .entries
            .iter()
            .map(|m| m.iter().copied().filter(|&(_, v)| v > prune_eps).collect())
            .collect();
        ConfidenceState {
            lattice: self.lattice,
            entries,
            step: self.step,
            prune_eps,
        }
    }

    /// Largest absolute per-entry difference to another state of the same lattice.
    pub fn max_abs_diff(&self, other: &ConfidenceState) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self.entries.iter().zip(&other.entries) {
            let (mut p, mut q) = (0, 0);
            loop {
                let d = match (a.get(p), b.get(q)) {
                    (None, None) => break,
                    (Some(&(ja, va)), Some(&(jb, vb))) => match ja.cmp(&jb) {
                        std::cmp::Ordering::Equal => {
                            p += 1;
                            q += 1;
                            va - vb
                        }
                        std::cmp::Ordering::Less => {
                            p += 1;
                            va
                        }
                        std::cmp::Ordering::Greater => {
                            q += 1;
                            vb
                        }
                    },
                    (Some(&(_, va)), None) => {
                        p += 1;
                        va
                    }
                    (None, Some(&(_, vb))) => {
                        q += 1;
                        vb
                    }
                };
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    /// Per-node summed confidence over a set of centres.
    pub fn tracked_mass(&self, centers: &[usize]) -> Vec<f64> {
        let mut sorted = centers.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        self.entries
            .iter()
            .map(|m| {
                m.iter()
                    .filter(|(j, _)| sorted.binary_search(j).is_ok())
                    .map(|&(_, v)| v)
                    .sum()
            })
            .collect()
    }
}

/// Every node holds exactly `{i -> 1}`.
pub fn init_one_hot(lattice: &Lattice) -> ConfidenceState {
    init_one_hot_with(lattice, DEFAULT_PRUNE_EPS)
}

pub fn init_one_hot_with(lattice: &Lattice, prune_eps: f64) -> ConfidenceState {
    ConfidenceState {
        lattice: *lattice,
        entries: (0..lattice.node_count()).map(|i| vec![(i, 1.0)]).collect(),
        step: 0,
        prune_eps,
    }
}

fn check_same_lattice(field: &CorrelationField, lattice: &Lattice, what: &str) -> Result<()> {
    if field.lattice() != lattice {
        return Err(Error::LatticeMismatch(format!(
            "{what}: field is {}x{}, lattice is {}x{}",
            field.lattice().rows(),
            field.lattice().cols(),
            lattice.rows(),
            lattice.cols()
        )));
    }
    Ok(())
}

fn propagate_node(
    lattice: &Lattice,
    field: &CorrelationField,
    prev: &[Vec<(usize, f64)>],
    node: usize,
    prune_eps: f64,
) -> Vec<(usize, f64)> {
    // Sources in slot order; empty slots are skipped.
    let mut sources: [(&[(usize, f64)], f64); 5] = [(&[], 0.0); 5];
    let mut count = 0;
    for slot in Slot::ALL {
        if let Some(n) = lattice.neighbor(node, slot) {
            let w = field.weight(node, slot);
            if w != 0.0 && !prev[n].is_empty() {
                sources[count] = (&prev[n], w);
                count += 1;
            }
        }
    }
    let sources = &sources[..count];
    let mut heads = [0usize; 5];
    let mut out = Vec::with_capacity(sources.iter().map(|s| s.0.len()).max().unwrap_or(0) + 4);
    loop {
        let mut next = usize::MAX;
        for (k, (list, _)) in sources.iter().enumerate() {
            if let Some(&(j, _)) = list.get(heads[k]) {
                next = next.min(j);
            }
        }
        if next == usize::MAX {
            break;
        }
        let mut acc = 0.0;
        for (k, (list, w)) in sources.iter().enumerate() {
            if let Some(&(j, v)) = list.get(heads[k]) {
                if j == next {
                    acc += w * v;
                    heads[k] += 1;
                }
            }
        }
        if acc > prune_eps {
            out.push((next, acc));
        }
    }
    out
}

/// One double-buffered propagation step.
pub fn cp_step(lattice: &Lattice, field: &CorrelationField, state: &ConfidenceState) -> Result<ConfidenceState> {
    check_same_lattice(field, lattice, "cp_step")?;
    if state.lattice() != lattice {
        return Err(Error::LatticeMismatch("cp_step: state belongs to another lattice".into()));
    }
    let prev = &state.entries;
    let eps = state.prune_eps;

    #[cfg(feature = "parallel")]
    let entries: Vec<Vec<(usize, f64)>> = {
        use rayon::prelude::*;
        (0..lattice.node_count())
            .into_par_iter()
            .with_min_len(64)
            .map(|i| propagate_node(lattice, field, prev, i, eps))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let entries: Vec<Vec<(usize, f64)>> = (0..lattice.node_count())
        .map(|i| propagate_node(lattice, field, prev, i, eps))
        .collect();

    Ok(ConfidenceState {
        lattice: *lattice,
        entries,
        step: state.step + 1,
        prune_eps: eps,
    })
}

/// Outcome of [`cp_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct CpRun {
    pub state: ConfidenceState,
    pub steps_used: usize,
    /// `steps_used * node_count`; every node update fuses five weighted reads.
    pub update_count: usize,
}

/// Repeats [`cp_step`] until the largest per-entry change is at most `tol`
/// or `max_steps` steps have run.
pub fn cp_run(
    lattice: &Lattice,
    field: &CorrelationField,
    init: &ConfidenceState,
    max_steps: usize,
    tol: f64,
) -> Result<CpRun> {
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be non-negative, got {tol}")));
    }
    let mut state = cp_step(lattice, field, init)?;
    let mut steps = 1;
    let mut change = state.max_abs_diff(init);
    while change > tol && steps < max_steps {
        let next = cp_step(lattice, field, &state)?;
        change = next.max_abs_diff(&state);
        state = next;
        steps += 1;
    }
    Ok(CpRun {
        state,
        steps_used: steps,
        update_count: steps * lattice.node_count(),
    })
}

/// Dense row-stochastic matrix whose row `i` holds the contribution weight of
/// every node to node `i` in one step.
pub fn dense_transition_matrix(lattice: &Lattice, field: &CorrelationField) -> DMatrix<f64> {
    let n = lattice.node_count();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for slot in Slot::ALL {
            if let Some(j) = lattice.neighbor(i, slot) {
                m[(i, j)] += field.weight(i, slot);
            }
        }
    }
    m
}

/// Node-to-centre assignment and its inverse.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterAssignment {
    pub center_of: Vec<Option<usize>>,
    pub clusters: BTreeMap<usize, Vec<usize>>,
}

impl ClusterAssignment {
    pub fn from_centers(center_of: Vec<Option<usize>>) -> ClusterAssignment {
        let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (node, c) in center_of.iter().enumerate() {
            if let Some(c) = c {
                clusters.entry(*c).or_default().push(node);
            }
        }
        ClusterAssignment { center_of, clusters }
    }

    /// Drops every node outside `mask`.
    pub fn restrict(&self, mask: &[bool]) -> ClusterAssignment {
        let center_of = self
            .center_of
            .iter()
            .zip(mask)
            .map(|(c, &m)| if m { *c } else { None })
            .collect();
        ClusterAssignment::from_centers(center_of)
    }

    /// Fraction of nodes in `mask` on which both assignments agree.
    pub fn agreement(&self, other: &ClusterAssignment, mask: &[bool]) -> f64 {
        let mut total = 0usize;
        let mut same = 0usize;
        for (node, &fg) in mask.iter().enumerate() {
            if fg {
                total += 1;
                if self.center_of[node] == other.center_of[node] {
                    same += 1;
                }
            }
        }
        if total == 0 {
            1.0
        } else {
            same as f64 / total as f64
        }
    }
}

/// Assigns every foreground node to the argmax centre of its confidence map
/// (ties to the smallest id), provided that maximum reaches `min_conf`.
pub fn extract_centers(state: &ConfidenceState, fg_mask: &[bool], min_conf: f64) -> Result<ClusterAssignment> {
    if fg_mask.len() != state.lattice().node_count() {
        return Err(Error::ShapeMismatch(format!(
            "mask of {} entries for {} nodes",
            fg_mask.len(),
            state.lattice().node_count()
        )));
    }
    let center_of = fg_mask
        .iter()
        .enumerate()
        .map(|(i, &fg)| {
            if !fg {
                return None;
            }
            let mut best: Option<(usize, f64)> = None;
            for &(j, v) in state.entries(i) {
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            best.filter(|&(_, v)| v >= min_conf).map(|(j, _)| j)
        })
        .collect();
    Ok(ClusterAssignment::from_centers(center_of))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::normalize_field;

    fn two_node_symmetric() -> (Lattice, CorrelationField) {
        let l = Lattice::grid(1, 2, 1).unwrap();
        let f = CorrelationField::from_weights(&l, vec![[0.5, 0.0, 0.0, 0.0, 0.5], [0.5, 0.0, 0.0, 0.5, 0.0]]).unwrap();
        (l, f)
    }

    /// 3x3 lattice where every boundary node sends all weight one step toward
    /// node 4 (vertical moves first), and node 4 keeps itself.
    fn all_point_to_center() -> (Lattice, CorrelationField) {
        let l = Lattice::grid(3, 3, 1).unwrap();
        let mut w = vec![[0.0; 5]; 9];
        for (i, row) in w.iter_mut().enumerate() {
            let (r, c) = l.coords(i);
            let slot = if r == 0 {
                Slot::Down
            } else if r == 2 {
                Slot::Up
            } else if c == 0 {
                Slot::Right
            } else if c == 2 {
                Slot::Left
            } else {
                Slot::SelfLoop
            };
            row[slot.index()] = 1.0;
        }
        (l, CorrelationField::from_weights(&l, w).unwrap())
    }

    #[test]
    fn one_hot_init() {
        let l = Lattice::grid(2, 2, 1).unwrap();
        let s = init_one_hot(&l);
        for i in 0..4 {
            assert_eq!(s.entries(i), &[(i, 1.0)]);
        }
        assert_eq!(s.total_mass(), 4.0);
        assert_eq!(s.step(), 0);
        let single = init_one_hot(&Lattice::grid(1, 1, 1).unwrap());
        assert_eq!(single.entries(0), &[(0, 1.0)]);
    }

    #[test]
    fn symmetric_pair_step() {
        let (l, f) = two_node_symmetric();
        let s = cp_step(&l, &f, &init_one_hot(&l)).unwrap();
        for i in 0..2 {
            assert_eq!(s.entries(i), &[(0, 0.5), (1, 0.5)]);
        }
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn identity_field_is_a_fixed_point() {
        let l = Lattice::grid(3, 4, 1).unwrap();
        let f = CorrelationField::identity(&l);
        let s0 = init_one_hot(&l);
        let mut s = s0.clone();
        for _ in 0..5 {
            s = cp_step(&l, &f, &s).unwrap();
            assert_eq!(s.all_entries(), s0.all_entries());
        }
        let run = cp_run(&l, &f, &s0, 50, 1e-9).unwrap();
        assert_eq!(run.steps_used, 1);
    }

    #[test]
    fn center_attractor_after_two_steps() {
        let (l, f) = all_point_to_center();
        let mut s = init_one_hot_with(&l, 0.0);
        for _ in 0..2 {
            s = cp_step(&l, &f, &s).unwrap();
        }
        let a = extract_centers(&s, &[true; 9], 0.0).unwrap();
        assert!(a.center_of.iter().all(|c| *c == Some(4)));
        assert_eq!(a.clusters.len(), 1);
        assert_eq!(a.clusters[&4], (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn update_counter() {
        let l = Lattice::grid(8, 8, 1).unwrap();
        let f = normalize_field(&l, vec![[0.3, 0.1, -0.2, 0.0, 0.4]; 64]).unwrap();
        let run = cp_run(&l, &f, &init_one_hot(&l), 10, 0.0).unwrap();
        assert_eq!(run.steps_used, 10);
        assert_eq!(run.update_count, 640);
    }

    #[test]
    fn symmetric_pair_converges() {
        let (l, f) = two_node_symmetric();
        let run = cp_run(&l, &f, &init_one_hot_with(&l, 0.0), 100, 1e-12).unwrap();
        assert!(run.steps_used <= 2);
        for i in 0..2 {
            assert_eq!(run.state.entries(i), &[(0, 0.5), (1, 0.5)]);
        }
    }

    #[test]
    fn dense_matrix_examples() {
        let l = Lattice::grid(2, 3, 1).unwrap();
        let m = dense_transition_matrix(&l, &CorrelationField::identity(&l));
        assert_eq!(m, DMatrix::identity(6, 6));
        let (l, f) = two_node_symmetric();
        let m = dense_transition_matrix(&l, &f);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]));
    }

    #[test]
    fn extract_argmax_and_ties() {
        let l = Lattice::grid(3, 3, 1).unwrap();
        let mut entries: Vec<Vec<(usize, f64)>> = (0..9).map(|i| vec![(i, 1.0)]).collect();
        entries[0] = vec![(4, 0.9), (0, 0.1)];
        entries[1] = vec![(2, 0.4), (7, 0.4)];
        entries[2] = vec![(3, 0.2)];
        let s = ConfidenceState::from_entries(&l, entries, 0, 0.0).unwrap();
        let mut mask = [false; 9];
        mask[0] = true;
        mask[1] = true;
        mask[2] = true;
        let a = extract_centers(&s, &mask, 0.3).unwrap();
        assert_eq!(a.center_of[0], Some(4));
        assert_eq!(a.center_of[1], Some(2));
        assert_eq!(a.center_of[2], None);
        assert_eq!(a.center_of[3], None);
        assert_eq!(a.clusters.keys().copied().collect::<Vec<_>>(), vec![2, 4]);
    }

    #[test]
    fn lattice_mismatch_is_reported() {
        let l = Lattice::grid(2, 2, 1).unwrap();
        let other = Lattice::grid(2, 3, 1).unwrap();
        let f = CorrelationField::identity(&other);
        assert!(matches!(cp_step(&l, &f, &init_one_hot(&l)), Err(Error::LatticeMismatch(_))));
    }

    #[test]
    fn max_abs_diff_covers_disjoint_supports() {
        let l = Lattice::grid(1, 2, 1).unwrap();
        let a = ConfidenceState::from_entries(&l, vec![vec![(0, 0.7)], vec![(1, 1.0)]], 0, 0.0).unwrap();
        let b = ConfidenceState::from_entries(&l, vec![vec![(1, 0.2)], vec![(1, 1.0)]], 0, 0.0).unwrap();
        assert!((a.max_abs_diff(&b) - 0.7).abs() < 1e-15);
        assert!((b.max_abs_diff(&a) - 0.7).abs() < 1e-15);
    }
}
