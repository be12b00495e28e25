mod oracle;

use std::f64::consts::FRAC_PI_3;

use latticeprop::cp::{cp_run, extract_centers, init_one_hot};
use latticeprop::geometry::decode_geometry;
use latticeprop::gps::{combined_vector_field, gps_cluster, greedy_paths, DEFAULT_MERGE_DISTANCE};
use latticeprop::learn::{train, TrainConfig};
use latticeprop::synth::{generate_scene, ideal_field, GenerateConfig, SyntheticScene};

fn coverage_groups(s: &SyntheticScene) -> Vec<Vec<usize>> {
    let mut g: Vec<Vec<usize>> = s.labels.instances.iter().map(|i| i.coverage.clone()).collect();
    g.sort();
    g
}

#[test]
fn generated_boxes_respect_ranges() {
    let cfg = GenerateConfig {
        h: 512,
        w: 512,
        d: 8,
        n_boxes: 2,
        scale_range: (16.0, 24.0),
        aspect_range: (4.0, 8.0),
        angle_range: (-FRAC_PI_3, FRAC_PI_3),
        ..GenerateConfig::default()
    };
    for seed in 0..100 {
        let s = generate_scene(seed, &cfg).unwrap();
        assert_eq!(s.gt_boxes.len(), 2);
        for b in &s.gt_boxes {
            assert!((4.0 - 1e-9..=8.0 + 1e-9).contains(&b.aspect()), "seed {seed} aspect {}", b.aspect());
            assert!(b.long_axis_angle().abs() <= FRAC_PI_3 + 1e-9, "seed {seed}");
            assert!((16.0 - 1e-9..=24.0 + 1e-9).contains(&b.w.min(b.h)));
        }
        assert_eq!(generate_scene(seed, &cfg).unwrap(), s);
    }
}

#[test]
fn ideal_fields_group_exactly_the_coverage() {
    let cfg = GenerateConfig::default();
    for seed in 0..100 {
        let s = generate_scene(seed, &cfg).unwrap();
        let lat = s.lattice;
        let field = ideal_field(&lat, &s.labels).unwrap();
        let fg = &s.labels.fg_mask;

        let traps = greedy_paths(&lat, &field, fg).unwrap();
        let mut centers: Vec<usize> = s.labels.instances.iter().map(|i| i.center).collect();
        centers.sort_unstable();
        assert_eq!(traps.candidates, centers, "seed {seed}");
        let hops: usize = s
            .labels
            .instances
            .iter()
            .flat_map(|inst| inst.coverage.iter().map(move |&n| oracle::manhattan(lat.cols(), n, inst.center)))
            .sum();
        assert_eq!(traps.total_hops(), hops);
        assert!(traps.total_hops() <= lat.node_count() * lat.diameter());

        let gps = gps_cluster(&lat, &field, fg, DEFAULT_MERGE_DISTANCE).unwrap();
        assert_eq!(oracle::groups_of(&gps.assignment().center_of), coverage_groups(&s));

        let cp = cp_run(&lat, &field, &init_one_hot(&lat), lat.diameter(), 1e-6).unwrap();
        let cpa = extract_centers(&cp.state, fg, 0.0).unwrap();
        assert_eq!(oracle::groups_of(&cpa.center_of), coverage_groups(&s));
        assert_eq!(cpa.agreement(&gps.assignment(), fg), 1.0);

        let omega = combined_vector_field(&field);
        for inst in &s.labels.instances {
            let (cr, cc) = lat.coords(inst.center);
            for &n in inst.coverage.iter().filter(|&&n| n != inst.center) {
                let (r, c) = lat.coords(n);
                let to_center = (cc as f64 - c as f64, cr as f64 - r as f64);
                let [vx, vy] = omega[n];
                assert!(vx * to_center.0 + vy * to_center.1 > 0.0, "seed {seed} node {n}");
            }
        }
    }
}

#[test]
fn box_targets_decode_to_their_box() {
    for seed in 0..30 {
        let s = generate_scene(seed, &GenerateConfig::default()).unwrap();
        for inst in &s.labels.instances {
            let b = inst.bbox.unwrap();
            for &n in &inst.coverage {
                let g = s.labels.box_targets[n].unwrap();
                let back = decode_geometry(s.lattice.pixel_center(n), &g).unwrap();
                for (p, q) in [(back.cx, b.cx), (back.cy, b.cy), (back.w, b.w), (back.h, b.h), (back.angle, b.angle)] {
                    assert!((p - q).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn training_halves_the_loss() {
    let cfg = GenerateConfig { h: 128, w: 128, d: 8, n_boxes: 2, scale_range: (16.0, 24.0), ..GenerateConfig::default() };
    let s = generate_scene(4, &cfg).unwrap();
    let out = train(&s.lattice, &s.labels, &TrainConfig { iters: 150, ..TrainConfig::default() }).unwrap();
    assert_eq!(out.trace.len(), 151);
    assert!(out.trace[150].total <= 0.5 * out.trace[0].total);
    let groups = oracle::groups_of(&out.assignment.restrict(&s.labels.fg_mask).center_of);
    assert_eq!(groups, coverage_groups(&s));
}

#[test]
fn zero_rate_keeps_the_loss() {
    let s = generate_scene(2, &GenerateConfig::default()).unwrap();
    let out = train(&s.lattice, &s.labels, &TrainConfig { iters: 10, lr: 0.0, ..TrainConfig::default() }).unwrap();
    assert!(out.trace.iter().all(|r| r.total == out.trace[0].total));
}
