use serde::{Deserialize, Serialize};

use super::OrientedBox;

/// A box with a detection score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(flatten)]
    pub bbox: OrientedBox,
    pub score: f64,
}

/// Signed shoelace area; positive for counter-clockwise order in a y-up frame.
fn signed_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for k in 0..n {
        let (x0, y0) = poly[k];
        let (x1, y1) = poly[(k + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    signed_area(poly).abs()
}

/// Sutherland-Hodgman clipping of `subject` by the convex polygon `clip`.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let orient = signed_area(clip).signum();
    let mut out = subject.to_vec();
    let n = clip.len();
    for k in 0..n {
        if out.is_empty() {
            break;
        }
        let a = clip[k];
        let b = clip[(k + 1) % n];
        let side = |p: (f64, f64)| orient * ((b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0));
        let input = std::mem::take(&mut out);
        let m = input.len();
        for i in 0..m {
            let cur = input[i];
            let prev = input[(i + m - 1) % m];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(intersect(prev, cur, sp, sc));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    out
}

fn intersect(p: (f64, f64), q: (f64, f64), sp: f64, sq: f64) -> (f64, f64) {
    let t = sp / (sp - sq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Intersection over union of two rotated rectangles.
pub fn iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.bounds();
    let (bx0, by0, bx1, by1) = b.bounds();
    if ax1 <= bx0 || bx1 <= ax0 || ay1 <= by0 || by1 <= ay0 {
        return 0.0;
    }
    // Clip in both orders and average so the result is symmetric in (a, b).
    let pa = a.corners();
    let pb = b.corners();
    let inter_ab = polygon_area(&clip_convex(&pa, &pb));
    let inter_ba = polygon_area(&clip_convex(&pb, &pa));
    let inter = 0.5 * (inter_ab + inter_ba);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression. Returns indices of kept boxes in
/// descending score order; equal scores keep insertion order. Disjoint
/// boxes never suppress each other.
pub fn nms(boxes: &[ScoredBox], iou_thresh: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| boxes[j].score.total_cmp(&boxes[i].score));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let suppressed = kept.iter().any(|&k| {
            let v = iou(&boxes[k].bbox, &boxes[i].bbox);
            v > 0.0 && v >= iou_thresh
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}
