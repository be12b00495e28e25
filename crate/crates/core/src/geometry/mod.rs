//! Rotated boxes and the detection tail: per-node geometry decoding,
//! centre-grouped merging, PCA fitting, rotated IoU, NMS and matching.
//!
//! Image coordinates have `x` to the right and `y` pointing down. A box
//! with angle `a` has its width along `u = (cos a, sin a)` and its height
//! along `v = (-sin a, cos a)`.

mod eval;
mod fit;
mod iou;

pub use eval::{evaluate, DetectionMetrics};
pub use fit::{merge_by_center, pca_box_from_cluster, MergedBox};
pub use iou::{iou, nms, polygon_area, ScoredBox};

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rotated rectangle. The angle is kept in `(-pi/4, pi/4]`, with `w`
/// measured along the angle axis; any other representation of the same
/// rectangle is folded into this one on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    #[serde(rename = "angle_rad")]
    pub angle: f64,
}

/// Reduces an angle modulo pi into `(-pi/2, pi/2]`.
pub fn wrap_half_turn(angle: f64) -> f64 {
    let mut a = angle - PI * (angle / PI).round();
    if a <= -FRAC_PI_2 {
        a += PI;
    } else if a > FRAC_PI_2 {
        a -= PI;
    }
    a
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, angle: f64) -> Result<OrientedBox> {
        if !(w > 0.0 && h > 0.0) || !w.is_finite() || !h.is_finite() {
            return Err(Error::DegenerateBox { w, h });
        }
        if !(cx.is_finite() && cy.is_finite() && angle.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite box parameters ({cx}, {cy}, {angle})"
            )));
        }
        let mut a = wrap_half_turn(angle);
        let (mut w, mut h) = (w, h);
        if a > FRAC_PI_4 {
            a -= FRAC_PI_2;
            std::mem::swap(&mut w, &mut h);
        } else if a <= -FRAC_PI_4 {
            a += FRAC_PI_2;
            std::mem::swap(&mut w, &mut h);
        }
        Ok(OrientedBox { cx, cy, w, h, angle: a })
    }

    /// Re-applies the canonical form, e.g. after deserialisation.
    pub fn canonical(self) -> Result<OrientedBox> {
        OrientedBox::new(self.cx, self.cy, self.w, self.h, self.angle)
    }

    pub fn axes(&self) -> ((f64, f64), (f64, f64)) {
        let (s, c) = self.angle.sin_cos();
        ((c, s), (-s, c))
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Ratio of the long side to the short side.
    pub fn aspect(&self) -> f64 {
        self.w.max(self.h) / self.w.min(self.h)
    }

    /// Orientation of the long side, in `(-pi/2, pi/2]`.
    pub fn long_axis_angle(&self) -> f64 {
        if self.w >= self.h {
            self.angle
        } else {
            wrap_half_turn(self.angle + FRAC_PI_2)
        }
    }

    /// Corners counter-clockwise on screen, starting from the corner that is
    /// top-left at angle zero.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let ((ux, uy), (vx, vy)) = self.axes();
        let (hw, hh) = (self.w / 2.0, self.h / 2.0);
        let at = |a: f64, b: f64| (self.cx + a * ux + b * vx, self.cy + a * uy + b * vy);
        [at(-hw, -hh), at(-hw, hh), at(hw, hh), at(hw, -hh)]
    }

    /// Coordinates of a point in the box frame.
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let ((ux, uy), (vx, vy)) = self.axes();
        let (dx, dy) = (x - self.cx, y - self.cy);
        (dx * ux + dy * uy, dx * vx + dy * vy)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        const EPS: f64 = 1e-9;
        let (a, b) = self.to_local(x, y);
        a.abs() <= self.w / 2.0 + EPS && b.abs() <= self.h / 2.0 + EPS
    }

    /// Axis-aligned extent `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let c = self.corners();
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (x, y) in c {
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x);
            b.3 = b.3.max(y);
        }
        b
    }
}

/// Distances from an anchor to the four sides of its box, measured in the
/// box frame, plus the box angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGeometry {
    pub d_top: f64,
    pub d_bottom: f64,
    pub d_left: f64,
    pub d_right: f64,
    pub angle: f64,
}

impl BoxGeometry {
    pub fn to_array(&self) -> [f64; 5] {
        [self.d_top, self.d_bottom, self.d_left, self.d_right, self.angle]
    }

    pub fn from_array(a: [f64; 5]) -> BoxGeometry {
        BoxGeometry {
            d_top: a[0],
            d_bottom: a[1],
            d_left: a[2],
            d_right: a[3],
            angle: a[4],
        }
    }
}

/// Side distances of `bbox` seen from `anchor`.
pub fn encode_geometry(anchor: (f64, f64), bbox: &OrientedBox) -> BoxGeometry {
    let (a, b) = bbox.to_local(anchor.0, anchor.1);
    BoxGeometry {
        d_top: b + bbox.h / 2.0,
        d_bottom: bbox.h / 2.0 - b,
        d_left: a + bbox.w / 2.0,
        d_right: bbox.w / 2.0 - a,
        angle: bbox.angle,
    }
}

/// Box whose sides lie at the given distances from `anchor`.
pub fn decode_geometry(anchor: (f64, f64), g: &BoxGeometry) -> Result<OrientedBox> {
    let d = g.to_array();
    if d[..4].iter().any(|x| !x.is_finite() || *x < 0.0) || !g.angle.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid side distances {:?}", &d[..4])));
    }
    let w = g.d_left + g.d_right;
    let h = g.d_top + g.d_bottom;
    if w <= 0.0 || h <= 0.0 {
        return Err(Error::DegenerateBox { w, h });
    }
    let (s, c) = g.angle.sin_cos();
    let (ux, uy, vx, vy) = (c, s, -s, c);
    let du = (g.d_right - g.d_left) / 2.0;
    let dv = (g.d_bottom - g.d_top) / 2.0;
    OrientedBox::new(
        anchor.0 + du * ux + dv * vx,
        anchor.1 + du * uy + dv * vy,
        w,
        h,
        g.angle,
    )
}
