//! WebAssembly bindings for the single-page demo in `www/`.
//!
//! A [`Demo`] holds one synthetic scene and a field derived from its ideal
//! field plus optional logit noise. The page asks it for propagation
//! heatmaps, greedy paths and detections; all arrays are flat and row-major.

use latticeprop::cp::{cp_step, init_one_hot, ConfidenceState};
use latticeprop::geometry::{evaluate, OrientedBox};
use latticeprop::gps::{combined_vector_field, gps_cluster, DEFAULT_MERGE_DISTANCE};
use latticeprop::lattice::{normalize_field, CorrelationField};
use latticeprop::pipeline::{self, Algo, Heads, InferConfig, MergePath};
use latticeprop::render::heatmap_values;
use latticeprop::synth::{generate_scene, ideal_field, GenerateConfig, SyntheticScene};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use wasm_bindgen::prelude::*;

fn corners_flat(boxes: &[OrientedBox]) -> Vec<f64> {
    boxes.iter().flat_map(|b| b.corners().into_iter().flat_map(|(x, y)| [x, y])).collect()
}

#[wasm_bindgen]
pub struct Demo {
    scene: SyntheticScene,
    field: CorrelationField,
    /// Propagation state and the number of steps it has taken.
    state: ConfidenceState,
    centers: Vec<usize>,
}

#[wasm_bindgen]
impl Demo {
    /// Scene of `boxes` boxes on a 256x256 image with 8-pixel cells. `noise`
    /// is the half-width of uniform noise added to the ideal logits.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, boxes: usize, noise: f64) -> Result<Demo, String> {
        let cfg = GenerateConfig {
            h: 256,
            w: 256,
            d: 8,
            n_boxes: boxes,
            scale_range: (20.0, 36.0),
            aspect_range: (1.0, 5.0),
            angle_range: (-std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_3),
            ..GenerateConfig::default()
        };
        let scene = generate_scene(seed, &cfg).map_err(|e| e.to_string())?;
        let ideal = ideal_field(&scene.lattice, &scene.labels).map_err(|e| e.to_string())?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x5eed);
        let logits: Vec<[f64; 5]> = ideal
            .logits()
            .iter()
            .map(|row| {
                let mut z = *row;
                if noise > 0.0 {
                    z.iter_mut().for_each(|v| *v += rng.random_range(-noise..=noise));
                }
                z
            })
            .collect();
        let field = normalize_field(&scene.lattice, logits).map_err(|e| e.to_string())?;
        let state = init_one_hot(&scene.lattice);
        let centers = scene.labels.centers();
        Ok(Demo {
            scene,
            field,
            state,
            centers,
        })
    }

    pub fn rows(&self) -> usize {
        self.scene.lattice.rows()
    }

    pub fn cols(&self) -> usize {
        self.scene.lattice.cols()
    }

    pub fn factor(&self) -> usize {
        self.scene.lattice.factor()
    }

    /// 1 on foreground nodes, 0 elsewhere.
    pub fn foreground(&self) -> Vec<u8> {
        self.scene.labels.fg_mask.iter().map(|&f| f as u8).collect()
    }

    /// Ground-truth boxes as 8 corner coordinates each.
    pub fn ground_truth(&self) -> Vec<f64> {
        corners_flat(&self.scene.gt_boxes)
    }

    /// Per-node mass in the labelled centres after `steps` propagation
    /// steps from one-hot, as bytes. Continues from the cached state when
    /// `steps` has not gone backwards.
    pub fn heatmap(&mut self, steps: usize) -> Result<Vec<u8>, String> {
        if steps < self.state.step() {
            self.state = init_one_hot(&self.scene.lattice);
        }
        while self.state.step() < steps {
            self.state = cp_step(&self.scene.lattice, &self.field, &self.state).map_err(|e| e.to_string())?;
        }
        Ok(heatmap_values(&self.state, &self.centers))
    }

    /// Combined vector per node, `[vx, vy]` pairs.
    pub fn vectors(&self) -> Vec<f64> {
        combined_vector_field(&self.field).into_iter().flatten().collect()
    }

    /// Trap of every foreground node after merging, `-1` on background.
    pub fn traps(&self) -> Result<Vec<i32>, String> {
        let m = gps_cluster(&self.scene.lattice, &self.field, &self.scene.labels.fg_mask, DEFAULT_MERGE_DISTANCE)
            .map_err(|e| e.to_string())?;
        Ok(m.traps.trap_of.iter().map(|t| t.map_or(-1, |c| c as i32)).collect())
    }

    /// Runs `algo` (`cp`, `gps` or `mc`) and returns the detection result.
    pub fn detect(&self, algo: &str) -> Result<Detection, String> {
        let algo: Algo = algo.parse().map_err(|e: latticeprop::Error| e.to_string())?;
        let cfg = InferConfig {
            algo,
            merge: MergePath::Regress,
            ..InferConfig::default()
        };
        let heads = Heads::from_labels(&self.scene.labels);
        let (outcome, boxes) = pipeline::infer(&self.scene.lattice, &self.field, &heads, &cfg).map_err(|e| e.to_string())?;
        let preds: Vec<OrientedBox> = boxes.iter().map(|b| b.bbox).collect();
        let m = evaluate(&preds, &self.scene.gt_boxes, 0.5);
        Ok(Detection {
            clusters: outcome
                .assignment
                .center_of
                .iter()
                .map(|c| c.map_or(-1, |c| c as i32))
                .collect(),
            corners: corners_flat(&preds),
            f_score: m.f_score,
            precision: m.precision,
            recall: m.recall,
        })
    }
}

#[wasm_bindgen]
pub struct Detection {
    clusters: Vec<i32>,
    corners: Vec<f64>,
    pub f_score: f64,
    pub precision: f64,
    pub recall: f64,
}

#[wasm_bindgen]
impl Detection {
    /// Cluster centre of every node, `-1` when unassigned.
    pub fn clusters(&self) -> Vec<i32> {
        self.clusters.clone()
    }

    /// Detected boxes as 8 corner coordinates each.
    pub fn corners(&self) -> Vec<f64> {
        self.corners.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_scene_is_recovered_by_every_algorithm() {
        let d = Demo::new(3, 3, 0.0).unwrap();
        assert_eq!((d.rows(), d.cols(), d.factor()), (32, 32, 8));
        assert_eq!(d.ground_truth().len(), 24);
        for algo in ["gps", "cp", "mc"] {
            let det = d.detect(algo).unwrap();
            assert_eq!(det.f_score, 1.0, "{algo}");
            assert_eq!(det.corners().len(), 24);
        }
        assert!(d.detect("other").is_err());
    }

    #[test]
    fn heatmap_rewinds() {
        let mut d = Demo::new(1, 2, 0.5).unwrap();
        let h0 = d.heatmap(0).unwrap();
        let h20 = d.heatmap(20).unwrap();
        assert_ne!(h0, h20);
        assert_eq!(d.heatmap(0).unwrap(), h0);
        assert_eq!(d.heatmap(20).unwrap(), h20);
    }

    #[test]
    fn traps_cover_foreground_only() {
        let d = Demo::new(5, 3, 0.0).unwrap();
        let fg = d.foreground();
        for (t, f) in d.traps().unwrap().iter().zip(&fg) {
            assert_eq!(*t >= 0, *f == 1);
        }
        assert_eq!(d.vectors().len(), 2 * fg.len());
    }
}
