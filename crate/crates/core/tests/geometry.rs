mod oracle;

use latticeprop::geometry::{decode_geometry, encode_geometry, evaluate, iou, nms, pca_box_from_cluster, OrientedBox, ScoredBox};
use latticeprop::lattice::Lattice;
use proptest::prelude::*;

fn boxes() -> impl Strategy<Value = OrientedBox> {
    (-20.0f64..20.0, -20.0f64..20.0, 1.0f64..30.0, 1.0f64..30.0, -3.2f64..3.2)
        .prop_map(|(x, y, w, h, a)| OrientedBox::new(x, y, w, h, a).unwrap())
}

fn poly(b: &OrientedBox) -> [(f64, f64); 4] {
    oracle::corners(b.cx, b.cy, b.w, b.h, b.angle)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_matches_rasterisation(a in boxes(), b in boxes()) {
        let want = oracle::raster_iou(&poly(&a), &poly(&b), 4000);
        prop_assert!((iou(&a, &b) - want).abs() < 2e-3);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in boxes(), b in boxes()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - iou(&b, &a)).abs() < 1e-12);
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometry_round_trip(b in boxes(), dx in -0.45f64..0.45, dy in -0.45f64..0.45) {
        // The anchor lies inside the box.
        let (u, v) = b.axes();
        let anchor = (b.cx + dx * b.w * u.0 + dy * b.h * v.0, b.cy + dx * b.w * u.1 + dy * b.h * v.1);
        let back = decode_geometry(anchor, &encode_geometry(anchor, &b)).unwrap();
        for (p, q) in [(back.cx, b.cx), (back.cy, b.cy), (back.w, b.w), (back.h, b.h), (back.angle, b.angle)] {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn nms_keeps_a_separated_subset(bs in prop::collection::vec((boxes(), 0.0f64..1.0), 0..12), thr in 0.1f64..0.9) {
        let scored: Vec<ScoredBox> = bs.iter().map(|&(bbox, score)| ScoredBox { bbox, score }).collect();
        let kept = nms(&scored, thr);
        prop_assert!(kept.windows(2).all(|w| scored[w[0]].score >= scored[w[1]].score));
        for (x, &i) in kept.iter().enumerate() {
            for &j in &kept[x + 1..] {
                prop_assert!(iou(&scored[i].bbox, &scored[j].bbox) < thr);
            }
        }
    }

    #[test]
    fn pca_ignores_member_order(mut members in prop::collection::vec(0usize..64, 2..20)) {
        let lat = Lattice::grid(8, 8, 16).unwrap();
        members.sort_unstable();
        members.dedup();
        let a = pca_box_from_cluster(&lat, &members).unwrap();
        members.reverse();
        prop_assert_eq!(pca_box_from_cluster(&lat, &members).unwrap(), a);
    }
}

#[test]
fn block_fits_axis_aligned_box() {
    let lat = Lattice::grid(6, 8, 16).unwrap();
    let members: Vec<usize> = (2..4).flat_map(|r| (1..6).map(move |c| r * 8 + c)).collect();
    let b = pca_box_from_cluster(&lat, &members).unwrap();
    assert_eq!((b.angle, b.w, b.h), (0.0, 80.0, 32.0));
    assert_eq!((b.cx, b.cy), (56.0, 48.0));
}

#[test]
fn half_matched_detections() {
    let g1 = OrientedBox::new(10.0, 10.0, 10.0, 10.0, 0.0).unwrap();
    let g2 = OrientedBox::new(50.0, 50.0, 10.0, 10.0, 0.0).unwrap();
    // Same height, width 8 inside 10: IoU 0.8.
    let p1 = OrientedBox::new(9.0, 10.0, 8.0, 10.0, 0.0).unwrap();
    let p2 = OrientedBox::new(90.0, 90.0, 10.0, 10.0, 0.0).unwrap();
    assert!((iou(&p1, &g1) - 0.8).abs() < 1e-12);
    let m = evaluate(&[p1, p2], &[g1, g2], 0.5);
    assert_eq!((m.precision, m.recall, m.f_score), (0.5, 0.5, 0.5));
}
