use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use super::{decode_geometry, wrap_half_turn, BoxGeometry, OrientedBox};
use crate::cp::ClusterAssignment;
use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// One box per cluster, with the cluster's mean foreground confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergedBox {
    pub center: usize,
    pub bbox: OrientedBox,
    pub score: f64,
}

/// Rewrites `b` as `(angle, w, h)` with the angle within a quarter turn of
/// `reference`, returning the angle offset from the reference.
fn align_to(b: &OrientedBox, reference: f64) -> (f64, f64, f64) {
    let delta = wrap_half_turn(b.angle - reference);
    if delta > FRAC_PI_4 {
        (delta - FRAC_PI_2, b.h, b.w)
    } else if delta < -FRAC_PI_4 {
        (delta + FRAC_PI_2, b.h, b.w)
    } else {
        (delta, b.w, b.h)
    }
}

fn mean_foreground(members: &[usize], fg_conf: &[f64]) -> f64 {
    members.iter().map(|&m| fg_conf[m]).sum::<f64>() / members.len() as f64
}

/// Decodes every member's geometry and fuses the boxes of each cluster by a
/// foreground-weighted average. Angles are averaged on the doubled circle.
pub fn merge_by_center(
    lattice: &Lattice,
    geometries: &[Option<BoxGeometry>],
    fg_conf: &[f64],
    assignment: &ClusterAssignment,
) -> Result<Vec<MergedBox>> {
    let n = lattice.node_count();
    if geometries.len() != n || fg_conf.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "expected {n} geometries and confidences, got {} and {}",
            geometries.len(),
            fg_conf.len()
        )));
    }
    let mut out = Vec::with_capacity(assignment.clusters.len());
    for (&center, members) in &assignment.clusters {
        let mut decoded: Vec<(OrientedBox, f64)> = Vec::with_capacity(members.len());
        for &m in members {
            let Some(g) = geometries[m] else { continue };
            if let Ok(b) = decode_geometry(lattice.pixel_center(m), &g) {
                decoded.push((b, fg_conf[m].max(0.0)));
            }
        }
        if decoded.is_empty() {
            return Err(Error::EmptyCluster { center });
        }
        let mut total: f64 = decoded.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            for d in decoded.iter_mut() {
                d.1 = 1.0;
            }
            total = decoded.len() as f64;
        }
        let reference = decoded[0].0.angle;
        let (mut cx, mut cy, mut w, mut h, mut s, mut c) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (b, wt) in &decoded {
            let (delta, bw, bh) = align_to(b, reference);
            cx += wt * b.cx;
            cy += wt * b.cy;
            w += wt * bw;
            h += wt * bh;
            s += wt * (2.0 * delta).sin();
            c += wt * (2.0 * delta).cos();
        }
        let angle = reference + 0.5 * s.atan2(c);
        let bbox = OrientedBox::new(cx / total, cy / total, w / total, h / total, angle)?;
        out.push(MergedBox {
            center,
            bbox,
            score: mean_foreground(members, fg_conf),
        });
    }
    Ok(out)
}

/// Oriented box from the second moments of the member pixel centres, padded
/// by half a cell on every side.
pub fn pca_box_from_cluster(lattice: &Lattice, members: &[usize]) -> Result<OrientedBox> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("empty cluster".into()));
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &m in &sorted {
        lattice.check_node(m)?;
    }
    let k = sorted.len() as f64;
    let pts: Vec<(f64, f64)> = sorted.iter().map(|&m| lattice.pixel_center(m)).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let scale = (sxx + syy).max(f64::MIN_POSITIVE);
    let isotropic = (sxx - syy).abs() <= 1e-12 * scale && sxy.abs() <= 1e-12 * scale;
    let theta = if isotropic {
        0.0
    } else {
        0.5 * (2.0 * sxy).atan2(sxx - syy)
    };
    let (st, ct) = theta.sin_cos();
    let (mut umin, mut umax, mut vmin, mut vmax) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &pts {
        let (dx, dy) = (x - mx, y - my);
        let u = dx * ct + dy * st;
        let v = -dx * st + dy * ct;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let d = lattice.factor() as f64;
    let (uc, vc) = ((umin + umax) / 2.0, (vmin + vmax) / 2.0);
    OrientedBox::new(
        mx + uc * ct - vc * st,
        my + uc * st + vc * ct,
        umax - umin + d,
        vmax - vmin + d,
        theta,
    )
}
