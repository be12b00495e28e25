//! Markov clustering on the lattice flow matrix: repeated expansion by the
//! one-step flow, column normalisation and pruning, with work counters and
//! the gradient of the clustering loss with respect to the initial flows.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cp::ClusterAssignment;
use crate::error::{Error, Result};
use crate::learn::{safe_ln, SceneLabels};
use crate::lattice::{CorrelationField, Lattice, Slot};

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 1e-4;
pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_MC_TOL: f64 = 1e-9;

/// Square sparse matrix stored by columns; each column is sorted by row.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    size: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl FlowMatrix {
    pub fn from_columns(size: usize, cols: Vec<Vec<(usize, f64)>>) -> Result<FlowMatrix> {
        if cols.len() != size {
            return Err(Error::ShapeMismatch(format!("{} columns for size {size}", cols.len())));
        }
        let mut cols = cols;
        for col in cols.iter_mut() {
            col.sort_by_key(|&(m, _)| m);
            if col.iter().any(|&(m, v)| m >= size || !v.is_finite()) {
                return Err(Error::InvalidArgument("flow entry out of range or non-finite".into()));
            }
            if col.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidArgument("duplicate flow entry".into()));
            }
            col.retain(|&(_, v)| v != 0.0);
        }
        Ok(FlowMatrix { size, cols })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<FlowMatrix> {
        if m.nrows() != m.ncols() {
            return Err(Error::ShapeMismatch(format!("{}x{} flow matrix", m.nrows(), m.ncols())));
        }
        let cols = (0..m.ncols())
            .map(|n| (0..m.nrows()).filter(|&r| m[(r, n)] != 0.0).map(|r| (r, m[(r, n)])).collect())
            .collect();
        FlowMatrix::from_columns(m.nrows(), cols)
    }

    pub fn identity(size: usize) -> FlowMatrix {
        FlowMatrix {
            size,
            cols: (0..size).map(|n| vec![(n, 1.0)]).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn column(&self, n: usize) -> &[(usize, f64)] {
        &self.cols[n]
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        let col = &self.cols[n];
        col.binary_search_by_key(&m, |&(r, _)| r).map(|k| col[k].1).unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.size, self.size);
        for (n, col) in self.cols.iter().enumerate() {
            for &(m, v) in col {
                d[(m, n)] = v;
            }
        }
        d
    }

    /// Coordinate triples sorted by column, then row.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.cols
            .iter()
            .enumerate()
            .flat_map(|(n, col)| col.iter().map(move |&(m, v)| (m, n, v)))
            .collect()
    }

    fn max_abs_diff(&self, other: &FlowMatrix) -> f64 {
        use std::cmp::Ordering;
        let mut worst: f64 = 0.0;
        for (a, b) in self.cols.iter().zip(&other.cols) {
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let order = match (a.get(i), b.get(j)) {
                    (Some(x), Some(y)) => x.0.cmp(&y.0),
                    (Some(_), None) => Ordering::Less,
                    _ => Ordering::Greater,
                };
                let d = match order {
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                        a[i - 1].1 - b[j - 1].1
                    }
                    Ordering::Less => {
                        i += 1;
                        a[i - 1].1
                    }
                    Ordering::Greater => {
                        j += 1;
                        b[j - 1].1
                    }
                };
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

/// Column `n` holds node `n`'s weights at the rows of itself and its
/// neighbours, normalised to sum to one.
pub fn build_flow_matrix(lattice: &Lattice, field: &CorrelationField) -> Result<FlowMatrix> {
    if field.lattice() != lattice {
        return Err(Error::LatticeMismatch("build_flow_matrix: field differs".into()));
    }
    let cols = (0..lattice.node_count())
        .map(|n| {
            let mut col: Vec<(usize, f64)> = Slot::ALL
                .iter()
                .filter_map(|&s| lattice.neighbor(n, s).map(|m| (m, field.weight(n, s))))
                .filter(|&(_, v)| v != 0.0)
                .collect();
            col.sort_by_key(|&(m, _)| m);
            let sum: f64 = col.iter().map(|&(_, v)| v).sum();
            col.iter_mut().for_each(|e| e.1 /= sum);
            col
        })
        .collect();
    FlowMatrix::from_columns(lattice.node_count(), cols)
}

/// Work and sparsity counters of [`mc_iterate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct McCounters {
    /// Scalar multiply-adds performed by the sparse expansions.
    pub expand_flops: u64,
    /// Divisions performed by the column normalisations.
    pub inflate_ops: u64,
    pub pruned_entries: u64,
    pub iterations: usize,
    /// Largest number of stored entries of any intermediate matrix.
    pub peak_nnz: usize,
}

/// Multiply-adds of one dense `size x size` product.
pub fn dense_expand_flops(size: usize) -> u64 {
    (size as u64).pow(3)
}

/// Outcome of [`mc_iterate`].
#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub matrix: FlowMatrix,
    pub counters: McCounters,
    pub converged: bool,
}

struct Scratch {
    acc: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(size: usize) -> Scratch {
        Scratch {
            acc: vec![0.0; size],
            seen: vec![false; size],
            touched: Vec::new(),
        }
    }
}

/// One output column of `prev * m0`; terms are added in ascending `k`.
fn expand_column(prev: &FlowMatrix, m0_col: &[(usize, f64)], s: &mut Scratch) -> (Vec<(usize, f64)>, u64) {
    let mut flops = 0u64;
    for &(k, w) in m0_col {
        for &(m, v) in &prev.cols[k] {
            if !s.seen[m] {
                s.seen[m] = true;
                s.touched.push(m);
            }
            s.acc[m] += v * w;
            flops += 1;
        }
    }
    s.touched.sort_unstable();
    let col = s.touched.iter().map(|&m| (m, s.acc[m])).filter(|&(_, v)| v != 0.0).collect();
    for &m in &s.touched {
        s.acc[m] = 0.0;
        s.seen[m] = false;
    }
    s.touched.clear();
    (col, flops)
}

/// `prev * m0`, together with the multiply-add count.
fn expand(prev: &FlowMatrix, m0: &FlowMatrix) -> (FlowMatrix, u64) {
    let size = m0.size;
    #[cfg(feature = "parallel")]
    let parts: Vec<(Vec<(usize, f64)>, u64)> = {
        use rayon::prelude::*;
        m0.cols
            .par_iter()
            .with_min_len(64)
            .map_init(|| Scratch::new(size), |s, col| expand_column(prev, col, s))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(Vec<(usize, f64)>, u64)> = {
        let mut s = Scratch::new(size);
        m0.cols.iter().map(|col| expand_column(prev, col, &mut s)).collect()
    };
    let flops = parts.iter().map(|p| p.1).sum();
    let cols = parts.into_iter().map(|p| p.0).collect();
    (FlowMatrix { size, cols }, flops)
}

fn inflate(m: &mut FlowMatrix) -> u64 {
    let mut ops = 0;
    for col in m.cols.iter_mut() {
        let sum: f64 = col.iter().map(|&(_, v)| v).sum();
        if sum > 0.0 {
            for e in col.iter_mut() {
                e.1 /= sum;
            }
        }
        ops += col.len() as u64;
    }
    ops
}

fn prune(m: &mut FlowMatrix, threshold: f64) -> Result<u64> {
    let mut removed = 0;
    for (n, col) in m.cols.iter_mut().enumerate() {
        let before = col.len();
        col.retain(|&(_, v)| v >= threshold);
        removed += (before - col.len()) as u64;
        if col.is_empty() {
            return Err(Error::AllPruned { column: n });
        }
    }
    Ok(removed)
}

fn check_params(max_iters: usize, threshold: f64) -> Result<()> {
    if max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("prune threshold must lie in [0, 1), got {threshold}")));
    }
    Ok(())
}

/// Expand by `m0`, normalise columns and prune entries below `threshold`,
/// until no entry changes by more than `tol` or `max_iters` is reached.
pub fn mc_iterate(m0: &FlowMatrix, max_iters: usize, threshold: f64, tol: f64) -> Result<McRun> {
    mc_iterate_observed(m0, max_iters, threshold, tol, |_, _| {})
}

/// [`mc_iterate`] that hands each freshly inflated matrix, before pruning,
/// to `observe` together with its 1-based iteration number.
pub fn mc_iterate_observed(
    m0: &FlowMatrix,
    max_iters: usize,
    threshold: f64,
    tol: f64,
    mut observe: impl FnMut(usize, &FlowMatrix),
) -> Result<McRun> {
    check_params(max_iters, threshold)?;
    let mut counters = McCounters::default();
    let mut current = m0.clone();
    counters.pruned_entries += prune(&mut current, threshold)?;
    counters.peak_nnz = m0.nnz();
    let mut converged = false;
    for _ in 0..max_iters {
        let (mut next, flops) = expand(&current, m0);
        counters.expand_flops += flops;
        counters.peak_nnz = counters.peak_nnz.max(next.nnz());
        counters.inflate_ops += inflate(&mut next);
        observe(counters.iterations + 1, &next);
        counters.pruned_entries += prune(&mut next, threshold)?;
        counters.iterations += 1;
        let change = next.max_abs_diff(&current);
        current = next;
        if change <= tol {
            converged = true;
            break;
        }
    }
    Ok(McRun {
        matrix: current,
        counters,
        converged,
    })
}

/// Node `n` goes to the largest row of column `n`, ties to the smaller row.
pub fn mc_clusters(m: &FlowMatrix) -> ClusterAssignment {
    let center_of = m
        .cols
        .iter()
        .map(|col| {
            let mut best: Option<(usize, f64)> = None;
            for &(r, v) in col {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((r, v));
                }
            }
            best.map(|(r, _)| r)
        })
        .collect();
    ClusterAssignment::from_centers(center_of)
}

/// Per-column target distributions over attractor nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowLabels {
    pub targets: Vec<Vec<(usize, f64)>>,
}

impl FlowLabels {
    pub fn from_scene(labels: &SceneLabels) -> FlowLabels {
        FlowLabels {
            targets: labels.center_labels.clone(),
        }
    }

    pub fn one_hot(attractors: &[usize]) -> FlowLabels {
        FlowLabels {
            targets: attractors.iter().map(|&a| vec![(a, 1.0)]).collect(),
        }
    }
}

/// Mean over columns of the cross-entropy between target and column.
pub fn mc_loss(m: &FlowMatrix, labels: &FlowLabels) -> Result<f64> {
    if labels.targets.len() != m.size {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for a {} matrix",
            labels.targets.len(),
            m.size
        )));
    }
    let total: f64 = labels
        .targets
        .iter()
        .enumerate()
        .map(|(n, t)| t.iter().map(|&(r, y)| -y * safe_ln(m.get(r, n))).sum::<f64>())
        .sum();
    Ok(total / m.size as f64)
}

fn gate(m: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    m.map(|v| if v != 0.0 && v >= threshold { 1.0 } else { 0.0 })
}

fn prune_dense(m: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    m.map(|v| if v >= threshold { v } else { 0.0 })
}

fn inflate_dense(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let s = col.sum();
        if s > 0.0 {
            col /= s;
        }
    }
}

/// Gradient of [`mc_loss`] after exactly `iters` iterations with respect to
/// the entries of `m0`.
///
/// Back-propagates through the expansion chain with the prune step as a
/// 0/1 gate on surviving entries and the normalisation as the identity:
/// `g(M_{t-1}) = M_0^T g(M_t)`, `g_t(M_0) = g(M_t) M_{t-1}^T`, and the
/// result is the gated gradient of the initial matrix plus every `g_t(M_0)`.
pub fn mc_gradients(m0: &FlowMatrix, labels: &FlowLabels, iters: usize, threshold: f64) -> Result<DMatrix<f64>> {
    check_params(iters, threshold)?;
    let size = m0.size;
    if labels.targets.len() != size {
        return Err(Error::ShapeMismatch(format!("{} targets for a {size} matrix", labels.targets.len())));
    }
    let a = m0.to_dense();
    let mut pruned = vec![prune_dense(&a, threshold)];
    let mut gates = vec![gate(&a, threshold)];
    for _ in 0..iters {
        let mut e = pruned.last().expect("non-empty") * &a;
        inflate_dense(&mut e);
        gates.push(gate(&e, threshold));
        pruned.push(prune_dense(&e, threshold));
    }
    let last = pruned.last().expect("non-empty");
    let mut g = DMatrix::zeros(size, size);
    for (n, t) in labels.targets.iter().enumerate() {
        for &(r, y) in t {
            let v = last[(r, n)];
            if y != 0.0 && v > 0.0 {
                g[(r, n)] = -y / (size as f64 * v.max(crate::learn::LOG_FLOOR));
            }
        }
    }
    let mut total = DMatrix::zeros(size, size);
    for t in (1..=iters).rev() {
        let g_e = g.component_mul(&gates[t]);
        total += &g_e * pruned[t - 1].transpose();
        g = a.transpose() * &g_e;
    }
    total += g.component_mul(&gates[0]);
    Ok(total)
}
