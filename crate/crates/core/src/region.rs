//! Oriented rectangles: object footprints, coverage tests and ray casting.

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::types::ObjectState;

/// Overlaps thinner than this are treated as touching, not intersecting.
const OVERLAP_EPS: f64 = 1e-12;

/// An oriented rectangle in the world frame.
///
/// Used for an object's covered region (its box enlarged by safety and
/// uncertainty margins) and for raw bounding boxes in the LiDAR simulator.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRegion {
    /// Center `[x, y]` (m).
    pub center: [f64; 2],
    /// Half extent along the heading axis (m).
    pub half_length: f64,
    /// Half extent across the heading axis (m).
    pub half_width: f64,
    /// Heading of the length axis (rad).
    pub theta: f64,
}

impl OrientedRegion {
    /// Builds a region.
    pub fn new(center: [f64; 2], half_length: f64, half_width: f64, theta: f64) -> Self {
        Self { center, half_length, half_width, theta }
    }

    /// The bare bounding box of an object, without any margin.
    pub fn bounding_box(o: &ObjectState) -> Self {
        Self::new([o.x, o.y], 0.5 * o.l, 0.5 * o.w, o.theta)
    }

    /// Unit vectors of the length and width axes.
    pub fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = (libm::sin(self.theta), libm::cos(self.theta));
        ([c, s], [-s, c])
    }

    /// Coordinates of `p` along the length and width axes, relative to the center.
    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (a, b) = self.axes();
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        [dot(d, a), dot(d, b)]
    }

    /// Closed point-in-rectangle test: boundary points are covered.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let [u, v] = self.to_local(p);
        let tol = 1e-12 * (1.0 + self.half_length.max(self.half_width));
        u.abs() <= self.half_length + tol && v.abs() <= self.half_width + tol
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (a, b) = self.axes();
        let (hl, hw) = (self.half_length, self.half_width);
        let [cx, cy] = self.center;
        let at = |su: f64, sv: f64| [cx + su * hl * a[0] + sv * hw * b[0], cy + su * hl * a[1] + sv * hw * b[1]];
        [at(-1.0, -1.0), at(1.0, -1.0), at(1.0, 1.0), at(-1.0, 1.0)]
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn aabb_half_extents(&self) -> [f64; 2] {
        let (a, b) = self.axes();
        [
            self.half_length * a[0].abs() + self.half_width * b[0].abs(),
            self.half_length * a[1].abs() + self.half_width * b[1].abs(),
        ]
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn aabb(&self) -> ([f64; 2], [f64; 2]) {
        let [ex, ey] = self.aabb_half_extents();
        let [cx, cy] = self.center;
        ([cx - ex, cy - ey], [cx + ex, cy + ey])
    }

    /// Whether the region and the axis-aligned rectangle `[min, max]` share a
    /// set of positive area. Rectangles that merely touch do not overlap.
    pub fn overlaps_rect(&self, min: [f64; 2], max: [f64; 2]) -> bool {
        if self.half_length <= OVERLAP_EPS || self.half_width <= OVERLAP_EPS {
            return false;
        }
        let rc = [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])];
        let rh = [0.5 * (max[0] - min[0]), 0.5 * (max[1] - min[1])];
        let d = [rc[0] - self.center[0], rc[1] - self.center[1]];
        let e = self.aabb_half_extents();
        // world axes
        if e[0] + rh[0] - d[0].abs() <= OVERLAP_EPS || e[1] + rh[1] - d[1].abs() <= OVERLAP_EPS {
            return false;
        }
        // region axes
        let (a, b) = self.axes();
        for (axis, half) in [(a, self.half_length), (b, self.half_width)] {
            let r = rh[0] * axis[0].abs() + rh[1] * axis[1].abs();
            if half + r - dot(d, axis).abs() <= OVERLAP_EPS {
                return false;
            }
        }
        true
    }

    /// Euclidean distance from `p` to the region; zero inside.
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let [u, v] = self.to_local(p);
        let du = (u.abs() - self.half_length).max(0.0);
        let dv = (v.abs() - self.half_width).max(0.0);
        libm::hypot(du, dv)
    }

    /// Distance along the ray `origin + t * dir` (unit `dir`) to the first
    /// boundary crossing, or `None` if the ray misses. A ray starting inside
    /// returns 0.
    pub fn ray_hit(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<f64> {
        let (a, b) = self.axes();
        let o = self.to_local(origin);
        let d = [dot(dir, a), dot(dir, b)];
        let half = [self.half_length, self.half_width];
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for k in 0..2 {
            if d[k].abs() < 1e-15 {
                if o[k].abs() > half[k] {
                    return None;
                }
                continue;
            }
            let t1 = (-half[k] - o[k]) / d[k];
            let t2 = (half[k] - o[k]) / d[k];
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            t_near = t_near.max(lo);
            t_far = t_far.min(hi);
            if t_near > t_far {
                return None;
            }
        }
        if t_far < 0.0 {
            return None;
        }
        Some(t_near.max(0.0))
    }
}

#[inline]
pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
