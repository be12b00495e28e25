//! Reference implementations used by the integration tests. They share no
//! numerical code with the library: neighbour lookup, softmax, propagation,
//! clustering and overlap are all recomputed from first principles.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;

/// Neighbour of `i` in slot order self, up, down, left, right.
pub fn neighbours(rows: usize, cols: usize, i: usize) -> [Option<usize>; 5] {
    let (r, c) = (i / cols, i % cols);
    [
        Some(i),
        (r > 0).then(|| i - cols),
        (r + 1 < rows).then(|| i + cols),
        (c > 0).then(|| i - 1),
        (c + 1 < cols).then(|| i + 1),
    ]
}

pub fn manhattan(cols: usize, a: usize, b: usize) -> usize {
    (a / cols).abs_diff(b / cols) + (a % cols).abs_diff(b % cols)
}

/// Softmax over the slots that exist; missing slots get zero.
pub fn softmax(z: &[f64; 5], exists: &[bool; 5]) -> [f64; 5] {
    let m = (0..5).filter(|&k| exists[k]).map(|k| z[k]).fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; 5];
    let mut sum = 0.0;
    for k in 0..5 {
        if exists[k] {
            out[k] = (z[k] - m).exp();
            sum += out[k];
        }
    }
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

pub fn exists(rows: usize, cols: usize, i: usize) -> [bool; 5] {
    neighbours(rows, cols, i).map(|n| n.is_some())
}

pub fn random_logits(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Vec<[f64; 5]> {
    (0..rows * cols)
        .map(|_| std::array::from_fn(|_| rng.random_range(-scale..scale)))
        .collect()
}

/// `A[i][n] = sum of i's weights on slots that point at n`.
pub fn mixing_matrix(rows: usize, cols: usize, weights: &[[f64; 5]]) -> DMatrix<f64> {
    let n = rows * cols;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for (k, nb) in neighbours(rows, cols, i).iter().enumerate() {
            if let Some(nb) = nb {
                a[(i, *nb)] += weights[i][k];
            }
        }
    }
    a
}

/// Confidence matrices `C_0 = I, C_t = A C_{t-1}` for `t = 0..=steps`;
/// row `i` of `C_t` is node `i`'s confidence over centres.
pub fn dense_cp(rows: usize, cols: usize, weights: &[[f64; 5]], steps: usize) -> Vec<DMatrix<f64>> {
    let a = mixing_matrix(rows, cols, weights);
    let mut out = vec![DMatrix::identity(rows * cols, rows * cols)];
    for _ in 0..steps {
        let next = &a * out.last().unwrap();
        out.push(next);
    }
    out
}

/// Mean over nodes of `-sum_j M(i,j) ln C_i(j)` after one step from one-hot.
pub fn one_step_center_loss(rows: usize, cols: usize, logits: &[[f64; 5]], labels: &[Vec<(usize, f64)>]) -> f64 {
    let n = rows * cols;
    let mut total = 0.0;
    for i in 0..n {
        let s = softmax(&logits[i], &exists(rows, cols, i));
        let nb = neighbours(rows, cols, i);
        for &(j, m) in &labels[i] {
            let c: f64 = (0..5).filter(|&k| nb[k] == Some(j)).map(|k| s[k]).sum();
            total -= m * c.max(1e-12).ln();
        }
    }
    total / n as f64
}

/// Central differences of [`one_step_center_loss`] in logit space.
pub fn fd_one_step(rows: usize, cols: usize, logits: &[[f64; 5]], labels: &[Vec<(usize, f64)>], h: f64) -> Vec<[f64; 5]> {
    let mut work = logits.to_vec();
    let mut out = vec![[0.0; 5]; logits.len()];
    for i in 0..logits.len() {
        let ex = exists(rows, cols, i);
        for k in 0..5 {
            if !ex[k] {
                continue;
            }
            let z = work[i][k];
            work[i][k] = z + h;
            let up = one_step_center_loss(rows, cols, &work, labels);
            work[i][k] = z - h;
            let down = one_step_center_loss(rows, cols, &work, labels);
            work[i][k] = z;
            out[i][k] = (up - down) / (2.0 * h);
        }
    }
    out
}

/// Confidence in `center` under plain propagation restricted to
/// `coverage`: nodes outside hold zero. Returns the vector after each of
/// `steps` steps, index 0 being the one-hot start.
pub fn restricted_replay(
    rows: usize,
    cols: usize,
    weights: &[[f64; 5]],
    coverage: &[usize],
    center: usize,
    steps: usize,
) -> Vec<Vec<f64>> {
    let n = rows * cols;
    let mut inside = vec![false; n];
    coverage.iter().for_each(|&c| inside[c] = true);
    let mut x = vec![0.0; n];
    x[center] = 1.0;
    let mut out = vec![x.clone()];
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for i in (0..n).filter(|&i| inside[i]) {
            for (k, nb) in neighbours(rows, cols, i).iter().enumerate() {
                if let Some(nb) = nb {
                    next[i] += weights[i][k] * x[*nb];
                }
            }
        }
        x = next;
        out.push(x.clone());
    }
    out
}

pub fn prune(m: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    m.map(|v| if v >= threshold { v } else { 0.0 })
}

pub fn normalise_columns(m: &mut DMatrix<f64>) {
    for mut c in m.column_iter_mut() {
        let s = c.sum();
        if s > 0.0 {
            c /= s;
        }
    }
}

/// Dense Markov clustering run: prune the start, then expand by the
/// unpruned start matrix, normalise and prune. Returns the final matrix,
/// the normalised matrix of every iteration and the multiply-adds a sparse
/// product would need, counted from the dense operands.
pub struct DenseMc {
    pub result: DMatrix<f64>,
    pub inflated: Vec<DMatrix<f64>>,
    pub flops: u64,
}

pub fn dense_mc(m0: &DMatrix<f64>, iters: usize, threshold: f64) -> DenseMc {
    let mut p = prune(m0, threshold);
    let mut inflated = Vec::new();
    let mut flops = 0u64;
    for _ in 0..iters {
        for n in 0..m0.ncols() {
            for k in 0..m0.nrows() {
                if m0[(k, n)] != 0.0 {
                    flops += p.column(k).iter().filter(|v| **v != 0.0).count() as u64;
                }
            }
        }
        let mut e = &p * m0;
        normalise_columns(&mut e);
        inflated.push(e.clone());
        p = prune(&e, threshold);
    }
    DenseMc { result: p, inflated, flops }
}

/// Mean column cross-entropy of `m0^(iters+1)` against per-column targets.
pub fn pure_product_loss(m0: &DMatrix<f64>, iters: usize, targets: &[Vec<(usize, f64)>]) -> f64 {
    let mut p = m0.clone();
    for _ in 0..iters {
        p = &p * m0;
    }
    let n = m0.ncols();
    let mut total = 0.0;
    for (c, t) in targets.iter().enumerate() {
        for &(r, y) in t {
            total -= y * p[(r, c)].max(1e-12).ln();
        }
    }
    total / n as f64
}

/// Random column-stochastic block-diagonal matrix with strictly positive
/// blocks; returns the matrix and the block id of every index.
pub fn block_diagonal(rng: &mut impl Rng, sizes: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
    let n: usize = sizes.iter().sum();
    let mut m = DMatrix::zeros(n, n);
    let mut block = Vec::with_capacity(n);
    let mut start = 0;
    for (b, &s) in sizes.iter().enumerate() {
        for c in start..start + s {
            for r in start..start + s {
                m[(r, c)] = rng.random_range(0.1..1.0);
            }
            block.push(b);
        }
        start += s;
    }
    normalise_columns(&mut m);
    (m, block)
}

/// Corners of a rotated rectangle, counter-clockwise in a y-down frame.
pub fn corners(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> [(f64, f64); 4] {
    let (s, c) = angle.sin_cos();
    let (ux, uy) = (c * w / 2.0, s * w / 2.0);
    let (vx, vy) = (-s * h / 2.0, c * h / 2.0);
    [
        (cx - ux - vx, cy - uy - vy),
        (cx + ux - vx, cy + uy - vy),
        (cx + ux + vx, cy + uy + vy),
        (cx - ux + vx, cy - uy + vy),
    ]
}

/// Horizontal span of a convex polygon at height `y`.
fn span(poly: &[(f64, f64)], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..poly.len() {
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        if (a.1 <= y && y <= b.1) || (b.1 <= y && y <= a.1) {
            let x = if (b.1 - a.1).abs() < 1e-300 { a.0 } else { a.0 + (y - a.1) * (b.0 - a.0) / (b.1 - a.1) };
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Overlap of two convex polygons by scanline rasterisation with `lines`
/// midpoint samples over their common vertical extent.
pub fn raster_iou(a: &[(f64, f64)], b: &[(f64, f64)], lines: usize) -> f64 {
    let ys = a.iter().chain(b).map(|p| p.1);
    let y0 = ys.clone().fold(f64::INFINITY, f64::min);
    let y1 = ys.fold(f64::NEG_INFINITY, f64::max);
    let dy = (y1 - y0) / lines as f64;
    let (mut inter, mut area_a, mut area_b) = (0.0, 0.0, 0.0);
    for k in 0..lines {
        let y = y0 + (k as f64 + 0.5) * dy;
        let sa = span(a, y);
        let sb = span(b, y);
        if let Some((l, h)) = sa {
            area_a += h - l;
        }
        if let Some((l, h)) = sb {
            area_b += h - l;
        }
        if let (Some(p), Some(q)) = (sa, sb) {
            inter += (p.1.min(q.1) - p.0.max(q.0)).max(0.0);
        }
    }
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Groups of indices sharing a label, as sorted member lists.
pub fn groups_of(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
    let mut map = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            map.entry(*l).or_default().push(i);
        }
    }
    let mut out: Vec<Vec<usize>> = map.into_values().collect();
    out.sort();
    out
}
