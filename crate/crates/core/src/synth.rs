//! Seeded synthetic scenes of rotated boxes and the analytic field that
//! points every covered node straight at its centre.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, OrientedBox};
use crate::learn::{box_coverage, box_in_bounds, center_node, label_scene, SceneLabels};
use crate::lattice::{normalize_field, CorrelationField, Lattice, Slot};

/// Rejection-sampling attempts per box.
pub const MAX_ATTEMPTS: usize = 1000;

/// Logit of the dominant slot in [`ideal_field`].
pub const IDEAL_LOGIT: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub n_boxes: usize,
    /// Short side in pixels.
    pub scale_range: (f64, f64),
    /// Long side over short side.
    pub aspect_range: (f64, f64),
    /// Orientation of the long side, radians.
    pub angle_range: (f64, f64),
    pub allow_overlap: bool,
    /// Largest IoU tolerated between boxes when overlap is not allowed.
    pub overlap_cap: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            h: 256,
            w: 256,
            d: 16,
            n_boxes: 3,
            scale_range: (40.0, 64.0),
            aspect_range: (1.0, 3.0),
            angle_range: (-std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_6),
            allow_overlap: false,
            overlap_cap: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub lattice: Lattice,
    pub gt_boxes: Vec<OrientedBox>,
    pub labels: SceneLabels,
    pub seed: u64,
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidArgument(format!("{name} [{lo}, {hi}] is empty")));
    }
    Ok(())
}

fn sample(rng: &mut Xoshiro256PlusPlus, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Every covered node has a neighbour inside the coverage that is one step
/// closer to the centre, so straight paths to the centre stay inside.
fn monotone_reachable(lattice: &Lattice, coverage: &[usize], center: usize) -> bool {
    coverage.iter().all(|&i| {
        let k = lattice.manhattan(i, center);
        k == 0
            || lattice
                .neighbors_iter(i)
                .any(|(_, n)| lattice.manhattan(n, center) + 1 == k && coverage.binary_search(&n).is_ok())
    })
}

struct Placed {
    bbox: OrientedBox,
    coverage: Vec<usize>,
    center: usize,
}

fn try_box(
    lattice: &Lattice,
    rng: &mut Xoshiro256PlusPlus,
    cfg: &GenerateConfig,
    placed: &[Placed],
) -> Result<Option<Placed>> {
    let short = sample(rng, cfg.scale_range);
    let aspect = sample(rng, cfg.aspect_range);
    let angle = sample(rng, cfg.angle_range);
    let long = short * aspect;
    let (s, c) = angle.sin_cos();
    let ex = (long * c.abs() + short * s.abs()) / 2.0;
    let ey = (long * s.abs() + short * c.abs()) / 2.0;
    let (wpx, hpx) = (cfg.w as f64, cfg.h as f64);
    if 2.0 * ex > wpx || 2.0 * ey > hpx {
        return Ok(None);
    }
    let cx = sample(rng, (ex, wpx - ex));
    let cy = sample(rng, (ey, hpx - ey));
    let bbox = OrientedBox::new(cx, cy, long, short, angle)?;
    if !box_in_bounds(lattice, &bbox) {
        return Ok(None);
    }
    let coverage = box_coverage(lattice, &bbox);
    let Some(center) = center_node(lattice, &bbox, &coverage) else {
        return Ok(None);
    };
    if placed.iter().any(|p| p.center == center) || !monotone_reachable(lattice, &coverage, center) {
        return Ok(None);
    }
    if !cfg.allow_overlap {
        for p in placed {
            let shared = coverage.iter().any(|n| p.coverage.binary_search(n).is_ok());
            if shared || iou(&p.bbox, &bbox) > cfg.overlap_cap {
                return Ok(None);
            }
        }
    }
    Ok(Some(Placed { bbox, coverage, center }))
}

/// Rejection-samples `n_boxes` boxes and labels them.
pub fn generate_scene(seed: u64, cfg: &GenerateConfig) -> Result<SyntheticScene> {
    let lattice = Lattice::new(cfg.h, cfg.w, cfg.d)?;
    check_range("scale_range", cfg.scale_range)?;
    check_range("aspect_range", cfg.aspect_range)?;
    check_range("angle_range", cfg.angle_range)?;
    if cfg.scale_range.0 <= 0.0 || cfg.aspect_range.0 < 1.0 {
        return Err(Error::InvalidArgument(
            "scales must be positive and aspect ratios at least 1".into(),
        ));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut placed: Vec<Placed> = Vec::with_capacity(cfg.n_boxes);
    for index in 0..cfg.n_boxes {
        let mut found = None;
        for _ in 0..MAX_ATTEMPTS {
            if let Some(p) = try_box(&lattice, &mut rng, cfg, &placed)? {
                found = Some(p);
                break;
            }
        }
        match found {
            Some(p) => placed.push(p),
            None => {
                return Err(Error::PlacementFailed {
                    index,
                    attempts: MAX_ATTEMPTS,
                })
            }
        }
    }
    let gt_boxes: Vec<OrientedBox> = placed.iter().map(|p| p.bbox).collect();
    let labels = label_scene(&lattice, &gt_boxes)?;
    Ok(SyntheticScene {
        lattice,
        gt_boxes,
        labels,
        seed,
    })
}

/// Field whose dominant slot moves each foreground node one step toward
/// its nearest labelled centre, preferring steps that stay inside that
/// centre's coverage and then vertical steps. Centres and background
/// nodes hold on SELF.
pub fn ideal_field(lattice: &Lattice, labels: &SceneLabels) -> Result<CorrelationField> {
    if labels.lattice() != lattice {
        return Err(Error::LatticeMismatch("ideal_field: labels belong to another lattice".into()));
    }
    let logits = (0..lattice.node_count())
        .map(|i| {
            let mut row = [0.0; 5];
            row[ideal_slot(lattice, labels, i).index()] = IDEAL_LOGIT;
            row
        })
        .collect();
    normalize_field(lattice, logits)
}

/// Dominant slot of node `i` in [`ideal_field`].
pub fn ideal_slot(lattice: &Lattice, labels: &SceneLabels, i: usize) -> Slot {
    let Some(j) = labels.primary_center(i) else {
        return Slot::SelfLoop;
    };
    if j == i {
        return Slot::SelfLoop;
    }
    let k = lattice.manhattan(i, j);
    let closer: Vec<(Slot, usize)> = lattice
        .neighbors_iter(i)
        .filter(|&(_, n)| lattice.manhattan(n, j) < k)
        .collect();
    closer
        .iter()
        .find(|&&(_, n)| labels.weight(n, j) > 0.0)
        .or_else(|| closer.first())
        .map(|&(s, _)| s)
        .unwrap_or(Slot::SelfLoop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::{cp_run, extract_centers, init_one_hot};
    use crate::gps::greedy_paths;

    #[test]
    fn deterministic_and_empty() {
        let cfg = GenerateConfig::default();
        assert_eq!(generate_scene(1, &cfg).unwrap(), generate_scene(1, &cfg).unwrap());
        let none = GenerateConfig { n_boxes: 0, ..cfg };
        let s = generate_scene(5, &none).unwrap();
        assert_eq!(s.labels, SceneLabels::background(&s.lattice));
    }

    #[test]
    fn impossible_placement_fails() {
        let cfg = GenerateConfig {
            h: 64,
            w: 64,
            scale_range: (100.0, 120.0),
            ..GenerateConfig::default()
        };
        assert_eq!(
            generate_scene(0, &cfg).unwrap_err(),
            Error::PlacementFailed { index: 0, attempts: MAX_ATTEMPTS }
        );
    }

    #[test]
    fn ideal_field_traps_at_centers() {
        for seed in 0..20 {
            let s = generate_scene(seed, &GenerateConfig::default()).unwrap();
            let f = ideal_field(&s.lattice, &s.labels).unwrap();
            let t = greedy_paths(&s.lattice, &f, &s.labels.fg_mask).unwrap();
            assert_eq!(t.candidates, s.labels.centers(), "seed {seed}");
            let run = cp_run(&s.lattice, &f, &init_one_hot(&s.lattice), s.lattice.diameter(), 0.0).unwrap();
            let cp = extract_centers(&run.state, &s.labels.fg_mask, 0.0).unwrap();
            assert_eq!(cp, t.assignment(), "seed {seed}");
        }
    }

    #[test]
    fn background_field_is_self_dominant() {
        let lat = Lattice::grid(4, 4, 8).unwrap();
        let f = ideal_field(&lat, &SceneLabels::background(&lat)).unwrap();
        let t = greedy_paths(&lat, &f, &[true; 16]).unwrap();
        assert_eq!(t.candidates.len(), 16);
    }
}
