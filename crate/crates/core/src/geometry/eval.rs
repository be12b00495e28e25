use serde::{Deserialize, Serialize};

use super::{iou, OrientedBox};

/// Precision, recall and F-score of a one-to-one matching at an IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub true_positives: usize,
    pub predictions: usize,
    pub ground_truth: usize,
    /// Matched `(prediction, ground truth)` index pairs.
    pub matches: Vec<(usize, usize)>,
}

/// Greedy matching by descending IoU; each box is used at most once.
/// With no boxes on either side every score is 1.
pub fn evaluate(preds: &[OrientedBox], gts: &[OrientedBox], iou_thresh: f64) -> DetectionMetrics {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (p, pb) in preds.iter().enumerate() {
        for (g, gb) in gts.iter().enumerate() {
            let v = iou(pb, gb);
            if v >= iou_thresh && v > 0.0 {
                pairs.push((v, p, g));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; preds.len()];
    let mut used_g = vec![false; gts.len()];
    let mut matches = Vec::new();
    for (_, p, g) in pairs {
        if !used_p[p] && !used_g[g] {
            used_p[p] = true;
            used_g[g] = true;
            matches.push((p, g));
        }
    }
    let tp = matches.len();
    let (precision, recall) = match (preds.len(), gts.len()) {
        (0, 0) => (1.0, 1.0),
        (np, ng) => (
            if np == 0 { 0.0 } else { tp as f64 / np as f64 },
            if ng == 0 { 0.0 } else { tp as f64 / ng as f64 },
        ),
    };
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    DetectionMetrics {
        precision,
        recall,
        f_score,
        true_positives: tp,
        predictions: preds.len(),
        ground_truth: gts.len(),
        matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(cx: f64) -> OrientedBox {
        OrientedBox::new(cx, 0.0, 2.0, 2.0, 0.0).unwrap()
    }

    #[test]
    fn perfect_and_empty() {
        let gts = [sq(0.0), sq(10.0)];
        let m = evaluate(&gts, &gts, 0.5);
        assert_eq!((m.precision, m.recall, m.f_score), (1.0, 1.0, 1.0));
        let none = evaluate(&[], &gts, 0.5);
        assert_eq!((none.precision, none.recall, none.f_score), (0.0, 0.0, 0.0));
        let both = evaluate(&[], &[], 0.5);
        assert_eq!((both.precision, both.recall, both.f_score), (1.0, 1.0, 1.0));
    }

    #[test]
    fn each_ground_truth_matched_once() {
        let preds = [sq(0.0), sq(0.1)];
        let m = evaluate(&preds, &[sq(0.0)], 0.5);
        assert_eq!(m.matches, vec![(0, 0)]);
        assert_eq!((m.precision, m.recall), (0.5, 1.0));
        assert!((m.f_score - 2.0 / 3.0).abs() < 1e-12);
    }
}
