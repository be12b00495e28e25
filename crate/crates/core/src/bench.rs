//! Timing of full propagation against greedy path selection on the same
//! ideal field, with the work counters of both and of Markov clustering.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cp::{cp_run, init_one_hot, DEFAULT_TOL};
use crate::error::Result;
use crate::gps::{greedy_paths, merge_close_candidates, DEFAULT_MERGE_DISTANCE};
use crate::mcl::{build_flow_matrix, mc_iterate, McCounters, DEFAULT_MAX_ITERS, DEFAULT_MC_TOL, DEFAULT_PRUNE_THRESHOLD};
use crate::synth::{generate_scene, ideal_field, GenerateConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    pub repeats: usize,
    pub scene: GenerateConfig,
    /// CP step cap; `None` uses the lattice diameter, the budget inference runs with.
    pub cp_max_steps: Option<usize>,
    pub cp_tol: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 0,
            repeats: 20,
            scene: GenerateConfig {
                h: 512,
                w: 512,
                d: 8,
                n_boxes: 6,
                scale_range: (24.0, 48.0),
                aspect_range: (1.0, 4.0),
                ..GenerateConfig::default()
            },
            cp_max_steps: None,
            cp_tol: DEFAULT_TOL,
        }
    }
}

/// Work figures; identical for every repeat count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCounters {
    pub rows: usize,
    pub cols: usize,
    pub node_count: usize,
    pub foreground: usize,
    pub cp_steps: usize,
    pub cp_steps_cap: usize,
    pub cp_converged: bool,
    pub cp_update_count: usize,
    pub gps_total_hops: usize,
    pub gps_candidates: usize,
    pub gps_merges: usize,
    pub mc: McCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTiming {
    pub cp_median_ms: f64,
    pub gps_median_ms: f64,
    pub speedup: f64,
    pub cp_samples_ms: Vec<f64>,
    pub gps_samples_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub counters: BenchCounters,
    pub timing: BenchTiming,
}

pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn time_ms<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64() * 1e3))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let scene = generate_scene(cfg.seed, &cfg.scene)?;
    let lattice = scene.lattice;
    let field = ideal_field(&lattice, &scene.labels)?;
    let fg = &scene.labels.fg_mask;
    let init = init_one_hot(&lattice);
    let repeats = cfg.repeats.max(1);
    let max_steps = cfg.cp_max_steps.unwrap_or(lattice.diameter()).max(1);

    // One warm-up pass of each leg, which also fixes the counters.
    let cp = cp_run(&lattice, &field, &init, max_steps, cfg.cp_tol)?;
    let traps = greedy_paths(&lattice, &field, fg)?;
    let merged = merge_close_candidates(&lattice, &field, &traps, DEFAULT_MERGE_DISTANCE)?;

    let mut cp_samples = Vec::with_capacity(repeats);
    let mut gps_samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let (_, ms) = time_ms(|| cp_run(&lattice, &field, &init, max_steps, cfg.cp_tol))?;
        cp_samples.push(ms);
        let (_, ms) = time_ms(|| {
            let t = greedy_paths(&lattice, &field, fg)?;
            merge_close_candidates(&lattice, &field, &t, DEFAULT_MERGE_DISTANCE)
        })?;
        gps_samples.push(ms);
    }

    let m0 = build_flow_matrix(&lattice, &field)?;
    let mc = mc_iterate(&m0, DEFAULT_MAX_ITERS, DEFAULT_PRUNE_THRESHOLD, DEFAULT_MC_TOL)?;

    let cp_median_ms = median(&cp_samples);
    let gps_median_ms = median(&gps_samples);
    Ok(BenchReport {
        counters: BenchCounters {
            rows: lattice.rows(),
            cols: lattice.cols(),
            node_count: lattice.node_count(),
            foreground: scene.labels.foreground_count(),
            cp_steps: cp.steps_used,
            cp_steps_cap: max_steps,
            cp_converged: cp.steps_used < max_steps,
            cp_update_count: cp.update_count,
            gps_total_hops: traps.total_hops(),
            gps_candidates: merged.traps.candidates.len(),
            gps_merges: merged.merges.len(),
            mc: mc.counters,
        },
        timing: BenchTiming {
            cp_median_ms,
            gps_median_ms,
            speedup: cp_median_ms / gps_median_ms,
            cp_samples_ms: cp_samples,
            gps_samples_ms: gps_samples,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
