//! Raster views: confidence heatmaps as PGM and the combined vector field
//! as arrows on a PPM grid.

use crate::cp::ConfidenceState;
use crate::lattice::Lattice;

/// Per-node `round(255 * sum of confidences in tracked centres)`, row-major.
pub fn heatmap_values(state: &ConfidenceState, tracked: &[usize]) -> Vec<u8> {
    let mut sorted = tracked.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    (0..state.lattice().node_count())
        .map(|i| {
            let mass: f64 = state
                .entries(i)
                .iter()
                .filter(|(j, _)| sorted.binary_search(j).is_ok())
                .map(|&(_, v)| v)
                .sum();
            (255.0 * mass).round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Binary PGM with one pixel per node.
pub fn heatmap_pgm(state: &ConfidenceState, tracked: &[usize]) -> Vec<u8> {
    let l = state.lattice();
    let mut out = format!("P5\n{} {}\n255\n", l.cols(), l.rows()).into_bytes();
    out.extend(heatmap_values(state, tracked));
    out
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[u8; 3]>,
}

impl Canvas {
    fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            self.px[y as usize * self.w + x as usize] = c;
        }
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, c: [u8; 3]) {
        let n = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            self.set((x0 + t * (x1 - x0)).round() as i64, (y0 + t * (y1 - y0)).round() as i64, c);
        }
    }
}

/// Arrows of the combined vector per node on a `cell`-pixel grid. Foreground
/// cells are shaded; arrow length is proportional to the vector norm.
pub fn omega_ppm(lattice: &Lattice, omega: &[[f64; 2]], fg_mask: &[bool], cell: usize) -> Vec<u8> {
    let cell = cell.max(4);
    let (w, h) = (lattice.cols() * cell, lattice.rows() * cell);
    let mut c = Canvas {
        w,
        h,
        px: vec![[255, 255, 255]; w * h],
    };
    for i in 0..lattice.node_count() {
        let (r, col) = lattice.coords(i);
        if fg_mask.get(i).copied().unwrap_or(false) {
            for y in r * cell..(r + 1) * cell {
                for x in col * cell..(col + 1) * cell {
                    c.px[y * w + x] = [220, 220, 220];
                }
            }
        }
    }
    let half = cell as f64 / 2.0;
    for i in 0..lattice.node_count() {
        let (r, col) = lattice.coords(i);
        let (cx, cy) = (col as f64 * cell as f64 + half, r as f64 * cell as f64 + half);
        let [vx, vy] = omega[i];
        let (ex, ey) = (cx + vx * (half - 1.0), cy + vy * (half - 1.0));
        c.line(cx, cy, ex, ey, [0, 0, 0]);
        c.set(ex.round() as i64, ey.round() as i64, [200, 0, 0]);
        c.set(cx.round() as i64, cy.round() as i64, [0, 0, 160]);
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(c.px.iter().flatten());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cp::init_one_hot;

    #[test]
    fn one_hot_heatmap() {
        let lat = Lattice::grid(2, 3, 4).unwrap();
        let s = init_one_hot(&lat);
        let img = heatmap_pgm(&s, &[1, 4]);
        assert!(img.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&img[img.len() - 6..], &[0, 255, 0, 0, 255, 0]);
        let all: Vec<usize> = (0..6).collect();
        assert!(heatmap_values(&s, &all).iter().all(|&v| v == 255));
    }

    #[test]
    fn omega_image_size() {
        let lat = Lattice::grid(2, 3, 4).unwrap();
        let img = omega_ppm(&lat, &[[0.5, 0.0]; 6], &[true; 6], 8);
        let header = b"P6\n24 16\n255\n";
        assert!(img.starts_with(header));
        assert_eq!(img.len(), header.len() + 24 * 16 * 3);
    }
}
