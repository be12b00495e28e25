//! Greedy path selection: every foreground node follows its strongest
//! weight until it reaches a node whose strongest weight is SELF.
//! Candidates that end up close together are checked with a small local
//! propagation and merged when they share a centre.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cp::{cp_run, init_one_hot, ClusterAssignment, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::lattice::{CorrelationField, Lattice, Slot};

/// Default Chebyshev radius below which two candidates are merge-checked.
pub const DEFAULT_MERGE_DISTANCE: f64 = 3.0;

/// Where each foreground node's greedy path ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrapMap {
    pub trap_of: Vec<Option<usize>>,
    pub path_len: Vec<usize>,
    /// Distinct traps, ascending.
    pub candidates: Vec<usize>,
}

impl TrapMap {
    pub fn total_hops(&self) -> usize {
        self.path_len.iter().sum()
    }

    pub fn assignment(&self) -> ClusterAssignment {
        ClusterAssignment::from_centers(self.trap_of.clone())
    }
}

/// Strongest slot of a node; ties go to SELF, then to the earlier slot.
pub fn next_hop(field: &CorrelationField, node: usize) -> Slot {
    let w = &field.weights()[node];
    let mut best = Slot::SelfLoop;
    for slot in Slot::DIRECTIONS {
        if w[slot.index()] > w[best.index()] {
            best = slot;
        }
    }
    best
}

fn follow(lattice: &Lattice, field: &CorrelationField, start: usize, stamp: &mut [usize], tag: usize) -> Result<(usize, usize)> {
    let mut cur = start;
    let mut hops = 0;
    stamp[cur] = tag;
    loop {
        let slot = next_hop(field, cur);
        if slot == Slot::SelfLoop {
            return Ok((cur, hops));
        }
        let next = lattice.neighbor(cur, slot).expect("masked slots carry zero weight");
        if stamp[next] == tag {
            return Err(Error::CycleDetected { node: start, revisited: next });
        }
        stamp[next] = tag;
        cur = next;
        hops += 1;
    }
}

/// Follows greedy paths from every foreground node.
pub fn greedy_paths(lattice: &Lattice, field: &CorrelationField, fg_mask: &[bool]) -> Result<TrapMap> {
    let n = lattice.node_count();
    if field.lattice() != lattice {
        return Err(Error::LatticeMismatch("greedy_paths: field differs".into()));
    }
    if fg_mask.len() != n {
        return Err(Error::ShapeMismatch(format!("mask of {} entries for {n} nodes", fg_mask.len())));
    }

    #[cfg(feature = "parallel")]
    let paths: Vec<Result<Option<(usize, usize)>>> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .with_min_len(256)
            .map_init(
                || vec![usize::MAX; n],
                |stamp, i| fg_mask[i].then(|| follow(lattice, field, i, stamp, i)).transpose(),
            )
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let paths: Vec<Result<Option<(usize, usize)>>> = {
        let mut stamp = vec![usize::MAX; n];
        (0..n)
            .map(|i| fg_mask[i].then(|| follow(lattice, field, i, &mut stamp, i)).transpose())
            .collect()
    };

    let mut trap_of = vec![None; n];
    let mut path_len = vec![0; n];
    let mut candidates = BTreeSet::new();
    for (i, p) in paths.into_iter().enumerate() {
        if let Some((trap, hops)) = p? {
            trap_of[i] = Some(trap);
            path_len[i] = hops;
            candidates.insert(trap);
        }
    }
    Ok(TrapMap {
        trap_of,
        path_len,
        candidates: candidates.into_iter().collect(),
    })
}

/// A merge performed by [`merge_close_candidates`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Merge {
    pub survivor: usize,
    pub absorbed: usize,
}

/// Result of [`merge_close_candidates`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeOutcome {
    pub traps: TrapMap,
    pub merges: Vec<Merge>,
}

impl MergeOutcome {
    pub fn assignment(&self) -> ClusterAssignment {
        self.traps.assignment()
    }
}

fn local_argmax(entries: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(j, v) in entries {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    best.map(|(j, _)| j)
}

/// Whether the two candidates reach the same argmax centre under a short
/// propagation on the smallest window holding both plus a one-node margin.
fn share_center(lattice: &Lattice, field: &CorrelationField, a: usize, b: usize) -> Result<bool> {
    let (ra, ca) = lattice.coords(a);
    let (rb, cb) = lattice.coords(b);
    let r0 = ra.min(rb).saturating_sub(1);
    let c0 = ca.min(cb).saturating_sub(1);
    let r1 = (ra.max(rb) + 1).min(lattice.rows() - 1);
    let c1 = (ca.max(cb) + 1).min(lattice.cols() - 1);
    let (rows, cols) = (r1 - r0 + 1, c1 - c0 + 1);
    let sub_field = field.window(r0, c0, rows, cols)?;
    let sub = *sub_field.lattice();
    // The window chain is ergodic, so running it to a fixed point would
    // erase every distinction; a few window crossings are enough.
    let steps = 2 * (rows + cols);
    let run = cp_run(&sub, &sub_field, &init_one_hot(&sub), steps, DEFAULT_TOL)?;
    let la = sub.index(ra - r0, ca - c0);
    let lb = sub.index(rb - r0, cb - c0);
    let ta = local_argmax(run.state.entries(la));
    let tb = local_argmax(run.state.entries(lb));
    Ok(ta.is_some() && ta == tb)
}

/// Merges candidate pairs closer than `d_t` (Chebyshev) whose local
/// propagation points both at one centre. Pairs are visited in ascending
/// order; the survivor has the larger basin, ties going to the smaller id.
pub fn merge_close_candidates(lattice: &Lattice, field: &CorrelationField, traps: &TrapMap, d_t: f64) -> Result<MergeOutcome> {
    if !(d_t >= 0.0) {
        return Err(Error::InvalidArgument(format!("merge distance must be non-negative, got {d_t}")));
    }
    let mut trap_of = traps.trap_of.clone();
    let cands = &traps.candidates;
    let mut alive = vec![true; cands.len()];
    let mut merges = Vec::new();
    for x in 0..cands.len() {
        for y in x + 1..cands.len() {
            if !alive[x] || !alive[y] {
                continue;
            }
            let (a, b) = (cands[x], cands[y]);
            if (lattice.chebyshev(a, b) as f64) >= d_t || !share_center(lattice, field, a, b)? {
                continue;
            }
            let basin = |c: usize| trap_of.iter().filter(|t| **t == Some(c)).count();
            let (survivor, absorbed, dead) = if basin(b) > basin(a) { (b, a, x) } else { (a, b, y) };
            alive[dead] = false;
            for t in trap_of.iter_mut() {
                if *t == Some(absorbed) {
                    *t = Some(survivor);
                }
            }
            merges.push(Merge { survivor, absorbed });
        }
    }
    let candidates = cands.iter().zip(&alive).filter(|(_, &a)| a).map(|(&c, _)| c).collect();
    Ok(MergeOutcome {
        traps: TrapMap {
            trap_of,
            path_len: traps.path_len.clone(),
            candidates,
        },
        merges,
    })
}

/// Greedy paths followed by candidate merging.
pub fn gps_cluster(lattice: &Lattice, field: &CorrelationField, fg_mask: &[bool], d_t: f64) -> Result<MergeOutcome> {
    let traps = greedy_paths(lattice, field, fg_mask)?;
    merge_close_candidates(lattice, field, &traps, d_t)
}

/// Net pull of the four directional weights, `(right - left, down - up)`.
pub fn combined_vector_field(field: &CorrelationField) -> Vec<[f64; 2]> {
    field
        .weights()
        .iter()
        .map(|w| {
            [
                w[Slot::Right.index()] - w[Slot::Left.index()],
                w[Slot::Down.index()] - w[Slot::Up.index()],
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::normalize_field;

    fn row(dominant: Slot) -> [f64; 5] {
        let mut r = [0.0; 5];
        r[dominant.index()] = 6.0;
        r
    }

    #[test]
    fn self_dominant_everywhere() {
        let lat = Lattice::grid(3, 4, 1).unwrap();
        let f = normalize_field(&lat, vec![row(Slot::SelfLoop); 12]).unwrap();
        let t = greedy_paths(&lat, &f, &[true; 12]).unwrap();
        assert_eq!(t.candidates, (0..12).collect::<Vec<_>>());
        assert!(t.path_len.iter().all(|&l| l == 0));
    }

    #[test]
    fn line_points_to_middle() {
        let lat = Lattice::grid(1, 3, 1).unwrap();
        let f = normalize_field(&lat, vec![row(Slot::Right), row(Slot::SelfLoop), row(Slot::Left)]).unwrap();
        let t = greedy_paths(&lat, &f, &[true; 3]).unwrap();
        assert_eq!(t.trap_of, vec![Some(1); 3]);
        assert_eq!(t.path_len, vec![1, 0, 1]);
        assert_eq!(t.candidates, vec![1]);
        assert_eq!(t.total_hops(), 2);
    }

    #[test]
    fn two_cycle_is_reported() {
        let lat = Lattice::grid(1, 2, 1).unwrap();
        let f = normalize_field(&lat, vec![row(Slot::Right), row(Slot::Left)]).unwrap();
        assert_eq!(
            greedy_paths(&lat, &f, &[true, false]).unwrap_err(),
            Error::CycleDetected { node: 0, revisited: 0 }
        );
    }

    #[test]
    fn background_nodes_are_unassigned() {
        let lat = Lattice::grid(1, 3, 1).unwrap();
        let f = normalize_field(&lat, vec![row(Slot::Right), row(Slot::SelfLoop), row(Slot::Left)]).unwrap();
        let t = greedy_paths(&lat, &f, &[false, true, false]).unwrap();
        assert_eq!(t.trap_of, vec![None, Some(1), None]);
    }

    #[test]
    fn omega_examples() {
        let lat = Lattice::grid(3, 3, 1).unwrap();
        let mut w = vec![[1.0, 0.0, 0.0, 0.0, 0.0]; 9];
        w[4] = [0.2; 5];
        let f = CorrelationField::from_weights(&lat, w.clone()).unwrap();
        assert_eq!(combined_vector_field(&f)[4], [0.0, 0.0]);
        w[4] = [0.1, 0.1, 0.1, 0.1, 0.6];
        let f = CorrelationField::from_weights(&lat, w).unwrap();
        let o = combined_vector_field(&f)[4];
        assert!((o[0] - 0.5).abs() < 1e-15 && o[1] == 0.0);
    }

    #[test]
    fn far_candidates_and_single_candidate_unchanged() {
        let lat = Lattice::grid(1, 8, 1).unwrap();
        let f = normalize_field(&lat, vec![row(Slot::SelfLoop); 8]).unwrap();
        let mut mask = [false; 8];
        mask[0] = true;
        mask[7] = true;
        let t = greedy_paths(&lat, &f, &mask).unwrap();
        let m = merge_close_candidates(&lat, &f, &t, 3.0).unwrap();
        assert_eq!(m.traps, t);
        assert!(m.merges.is_empty());
        let single = greedy_paths(&lat, &f, &[true, false, false, false, false, false, false, false]).unwrap();
        assert_eq!(merge_close_candidates(&lat, &f, &single, 3.0).unwrap().traps, single);
    }

    #[test]
    fn weak_trap_next_to_center_is_merged() {
        // Row of five nodes: node 1 is a strong centre, node 2 a weak local
        // trap that leaks toward it, nodes 3 and 4 point left.
        let lat = Lattice::grid(1, 5, 1).unwrap();
        let w = [
            [0.01, 0.0, 0.0, 0.0, 0.99],
            [0.99, 0.0, 0.0, 0.005, 0.005],
            [0.4, 0.0, 0.0, 0.35, 0.25],
            [0.01, 0.0, 0.0, 0.99, 0.0],
            [0.01, 0.0, 0.0, 0.99, 0.0],
        ];
        let f = CorrelationField::from_weights(&lat, w.iter().map(|r| {
            let mut r = *r;
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= s);
            r
        }).collect()).unwrap();
        let t = greedy_paths(&lat, &f, &[true; 5]).unwrap();
        assert_eq!(t.candidates, vec![1, 2]);
        let m = merge_close_candidates(&lat, &f, &t, 3.0).unwrap();
        assert_eq!(m.traps.candidates, vec![2]);
        assert_eq!(m.merges, vec![Merge { survivor: 2, absorbed: 1 }]);
        assert!(m.traps.trap_of.iter().all(|t| *t == Some(2)));
    }
}
