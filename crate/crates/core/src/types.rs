//! Shared domain types, angle helpers and velocity-representation conversions.
//!
//! All positions live in a fixed, gravity-aligned 2D world frame. Frames are the
//! join key between object lists, point clouds and injection ledgers.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One perceived object at one frame.
///
/// The uncertainty of the state is carried as per-field 1σ margins
/// (`dx`, `dy`, `dv`, `dtheta`, `dl`, `dw`). A missing heading margin means the
/// producer did not supply one; checks then fall back to their configured
/// default.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    /// Frame index.
    pub frame: u64,
    /// Timestamp in seconds.
    pub t: f64,
    /// Object identifier, stable across frames.
    pub id: u64,
    /// World x position of the box center (m).
    pub x: f64,
    /// World y position of the box center (m).
    pub y: f64,
    /// Speed, the absolute value of the velocity (m/s).
    pub v: f64,
    /// Heading (rad), in `(-PI, PI]`.
    pub theta: f64,
    /// Bounding-box length along the heading (m).
    pub l: f64,
    /// Bounding-box width (m).
    pub w: f64,
    /// Position margin along world x (m).
    pub dx: f64,
    /// Position margin along world y (m).
    pub dy: f64,
    /// Speed margin (m/s).
    pub dv: f64,
    /// Heading margin (rad), if the producer supplies one.
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub dtheta: Option<f64>,
    /// Length margin (m).
    pub dl: f64,
    /// Width margin (m).
    pub dw: f64,
}

impl ObjectState {
    /// A state with the given pose and box size and all margins zero.
    pub fn new(id: u64, frame: u64, t: f64, x: f64, y: f64, v: f64, theta: f64, l: f64, w: f64) -> Self {
        Self {
            frame,
            t,
            id,
            x,
            y,
            v,
            theta: normalize_angle(theta),
            l,
            w,
            dx: 0.0,
            dy: 0.0,
            dv: 0.0,
            dtheta: None,
            dl: 0.0,
            dw: 0.0,
        }
    }

    /// Position as an `[x, y]` pair.
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Cartesian velocity `(vx, vy)`.
    pub fn velocity(&self) -> (f64, f64) {
        polar_to_velocity(self.v, self.theta)
    }

    /// Checks the documented invariants.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.t, self.x, self.y, self.v, self.theta, self.l, self.w, self.dx, self.dy, self.dv, self.dl, self.dw,
        ];
        if fields.iter().any(|f| !f.is_finite()) || self.dtheta.is_some_and(|d| !d.is_finite()) {
            return Err(Error::InvalidState(format!("object {} frame {}: non-finite field", self.id, self.frame)));
        }
        if !(self.l > 0.0 && self.w > 0.0) {
            return Err(Error::InvalidState(format!("object {}: box size must be positive", self.id)));
        }
        let margins_ok = [self.dx, self.dy, self.dv, self.dl, self.dw].iter().all(|m| *m >= 0.0)
            && self.dtheta.is_none_or(|d| d >= 0.0);
        if !margins_ok {
            return Err(Error::InvalidState(format!("object {}: negative margin", self.id)));
        }
        if self.v < 0.0 {
            return Err(Error::InvalidState(format!("object {}: negative speed", self.id)));
        }
        if !(self.theta > -PI && self.theta <= PI) {
            return Err(Error::InvalidState(format!("object {}: heading not normalized", self.id)));
        }
        Ok(())
    }
}

/// Pose of the ego vehicle at one frame.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EgoPose {
    /// Frame index.
    pub frame: u64,
    /// Timestamp in seconds.
    pub t: f64,
    /// World x (m).
    pub x: f64,
    /// World y (m).
    pub y: f64,
    /// Heading (rad), in `(-PI, PI]`.
    pub theta: f64,
}

impl EgoPose {
    /// Position as an `[x, y]` pair.
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Obstacle returns of one LiDAR sweep, in the world frame.
///
/// Ground-plane and under-passable returns are already removed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud2D {
    /// Frame index.
    pub frame: u64,
    /// Points `[x, y]` in meters.
    pub points: Vec<[f64; 2]>,
}

impl PointCloud2D {
    /// Empty cloud for a frame.
    pub fn empty(frame: u64) -> Self {
        Self { frame, points: Vec::new() }
    }

    /// Fails if any coordinate is not finite.
    pub fn validate(&self) -> Result<()> {
        if self.points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidState(format!("frame {}: non-finite point", self.frame)));
        }
        Ok(())
    }
}

/// Kind of an injected fault.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorKind {
    /// Position offset applied at every frame.
    PositionPermanent,
    /// Position offset applied per object-frame with a fixed probability.
    PositionRandom,
    /// Speed offset applied at every frame.
    SpeedPermanent,
    /// Speed offset applied at single frames.
    SpeedTransient,
    /// Gaussian position noise; not an error and never ledgered.
    Noise,
}

impl ErrorKind {
    /// Stable snake-case name used in file formats.
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorKind::PositionPermanent => "position_permanent",
            ErrorKind::PositionRandom => "position_random",
            ErrorKind::SpeedPermanent => "speed_permanent",
            ErrorKind::SpeedTransient => "speed_transient",
            ErrorKind::Noise => "noise",
        }
    }

    /// Whether the kind shifts positions (as opposed to speeds).
    pub fn is_position(&self) -> bool {
        matches!(self, ErrorKind::PositionPermanent | ErrorKind::PositionRandom)
    }
}

/// Ground-truth ledger entry for one injected fault.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectedError {
    /// Frame of the faulty state.
    pub frame: u64,
    /// Target object.
    pub object_id: u64,
    /// Fault kind.
    pub kind: ErrorKind,
    /// Nominal magnitude (m or m/s).
    pub magnitude: f64,
    /// Applied x shift, set for position kinds.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub dx_applied: Option<f64>,
    /// Applied y shift, set for position kinds.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub dy_applied: Option<f64>,
    /// Applied speed change, set for speed kinds.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub dv_applied: Option<f64>,
    /// The faulty speed would have been negative and was clamped to zero.
    #[cfg_attr(feature = "serde", serde(default))]
    pub clamped: bool,
}

/// Normalizes an angle to `(-PI, PI]`.
pub fn normalize_angle(theta: f64) -> f64 {
    if !theta.is_finite() || (theta > -PI && theta <= PI) {
        return theta;
    }
    let mut r = theta - TAU * libm::floor(theta / TAU);
    // r in [0, TAU], up to rounding
    if r > PI {
        r -= TAU;
    }
    if r <= -PI {
        r += TAU;
    }
    r
}

/// Converts a Cartesian velocity to speed and heading.
///
/// The heading of the zero vector is 0.
pub fn velocity_to_polar(vx: f64, vy: f64) -> (f64, f64) {
    let v = libm::hypot(vx, vy);
    if v == 0.0 {
        return (0.0, 0.0);
    }
    (v, normalize_angle(libm::atan2(vy, vx)))
}

/// Converts speed and heading to a Cartesian velocity.
pub fn polar_to_velocity(v: f64, theta: f64) -> (f64, f64) {
    (v * libm::cos(theta), v * libm::sin(theta))
}

/// Iterates over a frame-sorted object stream, one slice per frame.
pub fn frames(stream: &[ObjectState]) -> impl Iterator<Item = (u64, &[ObjectState])> {
    stream.chunk_by(|a, b| a.frame == b.frame).map(|chunk| (chunk[0].frame, chunk))
}

/// Sorts a stream by `(frame, id)`, the canonical order of every file and transform.
pub fn sort_stream(stream: &mut [ObjectState]) {
    stream.sort_by_key(|o| (o.frame, o.id));
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn polar_examples() {
        assert_eq!(velocity_to_polar(0.0, 0.0), (0.0, 0.0));
        let (v, th) = velocity_to_polar(3.0, 4.0);
        assert!((v - 5.0).abs() < 1e-12);
        assert!((th - 0.927_295_218_001_612_2).abs() < 1e-12);
        let (v, th) = velocity_to_polar(-1.0, 0.0);
        assert_eq!(v, 1.0);
        assert!((th - PI).abs() < 1e-15);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-3.5 * PI) - 0.5 * PI).abs() < 1e-12);
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_bad_states() {
        let ok = ObjectState::new(1, 0, 0.0, 1.0, 2.0, 3.0, 0.5, 4.0, 2.0);
        assert!(ok.validate().is_ok());
        assert!(ObjectState { l: 0.0, ..ok }.validate().is_err());
        assert!(ObjectState { dx: -0.1, ..ok }.validate().is_err());
        assert!(ObjectState { v: -1.0, ..ok }.validate().is_err());
        assert!(ObjectState { theta: 4.0, ..ok }.validate().is_err());
        assert!(ObjectState { x: f64::NAN, ..ok }.validate().is_err());
    }

    #[test]
    fn frames_groups_sorted_stream() {
        let mut s: Vec<ObjectState> = (0..6)
            .map(|i| ObjectState::new(i % 2, (5 - i) / 2, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0))
            .collect();
        sort_stream(&mut s);
        let groups: Vec<(u64, usize)> = frames(&s).map(|(f, c)| (f, c.len())).collect();
        assert_eq!(groups, [(0, 2), (1, 2), (2, 2)]);
    }

    proptest! {
        #[test]
        fn polar_round_trip(v in 1e-6f64..100.0, theta in -10.0f64..10.0) {
            let (vx, vy) = polar_to_velocity(v, theta);
            let (v2, th2) = velocity_to_polar(vx, vy);
            prop_assert!((v2 - v).abs() < 1e-9);
            let (vx2, vy2) = polar_to_velocity(v2, th2);
            prop_assert!((vx2 - vx).abs() < 1e-9 && (vy2 - vy).abs() < 1e-9);
            prop_assert!(normalize_angle(normalize_angle(theta) - th2).abs() < 1e-9);
        }

        #[test]
        fn normalize_is_idempotent_and_in_range(theta in -1e4f64..1e4) {
            let n = normalize_angle(theta);
            prop_assert!(n > -PI && n <= PI);
            prop_assert_eq!(normalize_angle(n), n);
            let k = libm::round((theta - n) / TAU);
            prop_assert!((theta - n - k * TAU).abs() < 1e-9);
        }
    }
}
