//! Plausibility checks: verify an object's motion over one interval.
//!
//! Turn rate and acceleration are estimated from two consecutive states, the
//! position is predicted with a CTRA model expanded to second order in `Δt`,
//! and the motion is implausible if any of these holds:
//!
//! * turn rate: `ω̂ − Δω̂ > |ω_max|` or `ω̂ + Δω̂ < −|ω_max|`
//! * acceleration: `â − Δâ > a_acc` or `â + Δâ < a_br`
//! * position: `‖x̂ − x̃‖ − γ_plaus (‖Δx̂‖ + ‖Δx̃‖) > 0`
//!
//! Margins are propagated to first order, adding independent contributions in
//! quadrature. The prediction depends on both states through `â` and `ω̂`, so
//! the partials are taken with respect to the measured quantities of both.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::types::{normalize_angle, ObjectState};
use crate::{Error, Result};

/// Thresholds of the plausibility checks.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlausibilityParams {
    /// Maximum forward acceleration (m/s²).
    pub a_acc: f64,
    /// Maximum braking acceleration, negative (m/s²).
    pub a_br: f64,
    /// Maximum turn rate (rad/s).
    pub omega_max: f64,
    /// Heading margin used when a state carries none (rad).
    pub dtheta_default: f64,
    /// Multiplier on the position margins, `γ_plaus`.
    pub gamma_plaus: f64,
}

impl Default for PlausibilityParams {
    fn default() -> Self {
        Self {
            a_acc: 7.0,
            a_br: -7.0,
            omega_max: core::f64::consts::FRAC_PI_2 / 0.2,
            dtheta_default: 10f64.to_radians(),
            gamma_plaus: 1.0,
        }
    }
}

impl PlausibilityParams {
    /// Checks `a_acc > 0 > a_br`, `omega_max > 0` and non-negative margins.
    pub fn validate(&self) -> Result<()> {
        if !(self.a_acc > 0.0 && self.a_br < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "plausibility limits need a_acc > 0 > a_br, got a_acc={} a_br={}",
                self.a_acc, self.a_br
            )));
        }
        if !(self.omega_max > 0.0) {
            return Err(Error::InvalidConfig(format!("plausibility.omega_max must be positive, got {}", self.omega_max)));
        }
        if !(self.gamma_plaus >= 0.0 && self.dtheta_default >= 0.0) {
            return Err(Error::InvalidConfig("plausibility margins must be non-negative".into()));
        }
        Ok(())
    }

    fn dtheta(&self, o: &ObjectState) -> f64 {
        o.dtheta.unwrap_or(self.dtheta_default)
    }
}

/// Estimated turn rate and acceleration with their margins.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// Turn rate `ω̂` (rad/s).
    pub omega_hat: f64,
    /// Acceleration `â` (m/s²).
    pub a_hat: f64,
    /// Margin `Δω̂` (rad/s).
    pub d_omega: f64,
    /// Margin `Δâ` (m/s²).
    pub d_a: f64,
}

/// Predicted position with margins.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Predicted x (m).
    pub x: f64,
    /// Predicted y (m).
    pub y: f64,
    /// Margin on x (m).
    pub dx: f64,
    /// Margin on y (m).
    pub dy: f64,
}

/// A violated plausibility condition.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Violation {
    /// Turn rate beyond `ω_max`.
    TurnRate,
    /// Acceleration outside `[a_br, a_acc]`.
    Acceleration,
    /// Measured position outside the predicted margin.
    PositionPrediction,
}

/// Plausibility result for one object.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, PartialEq)]
pub struct PlausibilityVerdict {
    /// Frame of the checked (current) state.
    pub frame: u64,
    /// Object identifier.
    pub object_id: u64,
    /// True iff no condition is violated.
    pub plausible: bool,
    /// Violated conditions, in declaration order.
    pub violated: Vec<Violation>,
    /// Predicted position and margins.
    pub predicted: Prediction,
    /// Distance between predicted and measured position (m).
    pub residual: f64,
    /// Allowed distance `γ_plaus (‖Δx̂‖ + ‖Δx̃‖)` (m).
    pub tolerance: f64,
}

impl PlausibilityVerdict {
    /// Verdict for an object seen for the first time: plausible, predicted at
    /// its measured position.
    pub fn first_seen(o: &ObjectState) -> Self {
        Self {
            frame: o.frame,
            object_id: o.id,
            plausible: true,
            violated: Vec::new(),
            predicted: Prediction { x: o.x, y: o.y, dx: o.dx, dy: o.dy },
            residual: 0.0,
            tolerance: 0.0,
        }
    }
}

/// Displacement `(f_x, f_y)` of the second-order CTRA expansion.
pub fn ctra_displacement(dt: f64, v: f64, theta: f64, a: f64, omega: f64) -> (f64, f64) {
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let h = 0.5 * dt * dt;
    (v * dt * c + h * (a * c - v * omega * s), v * dt * s + h * (a * s + v * omega * c))
}

/// Partials of the CTRA displacement with respect to `(v, θ, a, ω)`, one row
/// per coordinate.
pub fn ctra_partials(dt: f64, v: f64, theta: f64, a: f64, omega: f64) -> [[f64; 4]; 2] {
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let h = 0.5 * dt * dt;
    [
        [dt * c - h * omega * s, -v * dt * s + h * (-a * s - v * omega * c), h * c, -h * v * s],
        [dt * s + h * omega * c, v * dt * c + h * (a * c - v * omega * s), h * s, h * v * c],
    ]
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::ZeroInterval { dt })
    }
}

/// Turn rate and acceleration from two states `dt` apart.
///
/// The heading difference is normalized to `(−π, π]`. Margins combine the
/// margins of both states in quadrature.
pub fn estimate_rates(prev: &ObjectState, curr: &ObjectState, dt: f64, params: &PlausibilityParams) -> Result<RateEstimate> {
    check_dt(dt)?;
    Ok(RateEstimate {
        omega_hat: normalize_angle(curr.theta - prev.theta) / dt,
        a_hat: (curr.v - prev.v) / dt,
        d_omega: libm::hypot(params.dtheta(prev), params.dtheta(curr)) / dt,
        d_a: libm::hypot(prev.dv, curr.dv) / dt,
    })
}

/// Partials of the predicted displacement with respect to
/// `(v_t, v_{t+Δt}, θ_t, θ_{t+Δt})`, one row per coordinate.
pub fn prediction_jacobian(prev: &ObjectState, curr: &ObjectState, dt: f64) -> Result<[[f64; 4]; 2]> {
    check_dt(dt)?;
    let a = (curr.v - prev.v) / dt;
    let omega = normalize_angle(curr.theta - prev.theta) / dt;
    let p = ctra_partials(dt, prev.v, prev.theta, a, omega);
    Ok(p.map(|[fv, fth, fa, fw]| [fv - fa / dt, fa / dt, fth - fw / dt, fw / dt]))
}

/// Position at `curr`'s time predicted from `prev` and the estimated rates.
pub fn predict_position(
    prev: &ObjectState,
    curr: &ObjectState,
    dt: f64,
    params: &PlausibilityParams,
) -> Result<Prediction> {
    let est = estimate_rates(prev, curr, dt, params)?;
    let (fx, fy) = ctra_displacement(dt, prev.v, prev.theta, est.a_hat, est.omega_hat);
    let jac = prediction_jacobian(prev, curr, dt)?;
    let dq = [prev.dv, curr.dv, params.dtheta(prev), params.dtheta(curr)];
    let margin = |row: &[f64; 4], d0: f64| {
        let sum: f64 = row.iter().zip(&dq).map(|(g, d)| (g * d) * (g * d)).sum();
        libm::sqrt(d0 * d0 + sum)
    };
    Ok(Prediction { x: prev.x + fx, y: prev.y + fy, dx: margin(&jac[0], prev.dx), dy: margin(&jac[1], prev.dy) })
}

/// Checks the motion from `prev` to `curr`, with `dt = curr.t − prev.t`.
pub fn check_plausibility(
    prev: &ObjectState,
    curr: &ObjectState,
    params: &PlausibilityParams,
) -> Result<PlausibilityVerdict> {
    let dt = curr.t - prev.t;
    let est = estimate_rates(prev, curr, dt, params)?;
    let pred = predict_position(prev, curr, dt, params)?;
    let mut violated = Vec::new();
    let w = params.omega_max.abs();
    if est.omega_hat - est.d_omega > w || est.omega_hat + est.d_omega < -w {
        violated.push(Violation::TurnRate);
    }
    if est.a_hat - est.d_a > params.a_acc || est.a_hat + est.d_a < params.a_br {
        violated.push(Violation::Acceleration);
    }
    let residual = libm::hypot(pred.x - curr.x, pred.y - curr.y);
    let tolerance = params.gamma_plaus * (libm::hypot(pred.dx, pred.dy) + libm::hypot(curr.dx, curr.dy));
    if residual - tolerance > 0.0 {
        violated.push(Violation::PositionPrediction);
    }
    Ok(PlausibilityVerdict {
        frame: curr.frame,
        object_id: curr.id,
        plausible: violated.is_empty(),
        violated,
        predicted: pred,
        residual,
        tolerance,
    })
}

/// Keeps the last state of every object and checks each new frame against it.
///
/// Objects without history are plausible. An object missing from a frame loses
/// its history.
#[derive(Debug, Clone, Default)]
pub struct PlausibilityMonitor {
    params: PlausibilityParams,
    history: BTreeMap<u64, ObjectState>,
}

impl PlausibilityMonitor {
    /// Creates a monitor with empty history.
    pub fn new(params: PlausibilityParams) -> Self {
        Self { params, history: BTreeMap::new() }
    }

    /// Parameters in use.
    pub fn params(&self) -> &PlausibilityParams {
        &self.params
    }

    /// Forgets all history.
    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Last state of object `id`, if any.
    pub fn last(&self, id: u64) -> Option<&ObjectState> {
        self.history.get(&id)
    }

    /// Checks one frame of objects and stores them as the new history.
    pub fn check_frame(&mut self, objects: &[ObjectState]) -> Result<Vec<PlausibilityVerdict>> {
        let verdicts = objects
            .iter()
            .map(|o| match self.history.get(&o.id) {
                Some(prev) => check_plausibility(prev, o, &self.params),
                None => Ok(PlausibilityVerdict::first_seen(o)),
            })
            .collect::<Result<Vec<_>>>()?;
        self.history = objects.iter().map(|o| (o.id, *o)).collect();
        Ok(verdicts)
    }
}

/// Pattern of an injected speed error in the two-step analysis.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedFault {
    /// Both steps carry the offset.
    Permanent,
    /// Only the second step carries the offset.
    Transient,
}

/// Measurement margins of the two-step speed analysis.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedMargins {
    /// Position margin along x (m).
    pub dx: f64,
    /// Position margin along y (m).
    pub dy: f64,
    /// Speed margin (m/s).
    pub dv: f64,
    /// Heading margin (rad).
    pub dtheta: f64,
}

impl Default for SpeedMargins {
    fn default() -> Self {
        Self { dx: 0.1, dy: 0.1, dv: 1.0, dtheta: 10f64.to_radians() }
    }
}

/// Transient detection threshold in the small-interval regime:
/// `min(a_acc, −a_br) Δt + √2 Δv`.
pub fn transient_threshold_closed_form(dt: f64, dv: f64, params: &PlausibilityParams) -> f64 {
    params.a_acc.min(-params.a_br) * dt + core::f64::consts::SQRT_2 * dv
}

/// Whether the two-step scenario with speed `v`, interval `dt` and injected
/// offset `delta` is reported implausible.
pub fn speed_error_detected(
    v: f64,
    dt: f64,
    delta: f64,
    kind: SpeedFault,
    margins: &SpeedMargins,
    params: &PlausibilityParams,
) -> bool {
    let state = |frame: u64, x: f64, speed: f64| {
        let mut o = ObjectState::new(0, frame, frame as f64 * dt, x, 0.0, speed, 0.0, 0.5, 0.5);
        o.dx = margins.dx;
        o.dy = margins.dy;
        o.dv = margins.dv;
        o.dtheta = Some(margins.dtheta);
        o
    };
    let v0 = match kind {
        SpeedFault::Permanent => v + delta,
        SpeedFault::Transient => v,
    };
    let prev = state(0, 0.0, v0);
    let curr = state(1, v * dt, v + delta);
    check_plausibility(&prev, &curr, params).is_ok_and(|r| !r.plausible)
}

const SCAN_STEP: f64 = 0.01;
const SCAN_MAX: f64 = 50.0;

/// Smallest detectable positive and negative speed offsets `(dv_pos, dv_neg)`,
/// both as magnitudes, found by scanning `|δv|` in 0.01 m/s steps up to 50 m/s
/// and refining the first detection by bisection. Returns infinity for a
/// direction with no detection in range.
///
/// The scenario is an object moving at `v` along x for two steps; the offset
/// does not change the measured positions.
pub fn min_detectable_speed_error(
    v: f64,
    dt: f64,
    kind: SpeedFault,
    margins: &SpeedMargins,
    params: &PlausibilityParams,
) -> (f64, f64) {
    let scan = |sign: f64| {
        let hit = |mag: f64| speed_error_detected(v, dt, sign * mag, kind, margins, params);
        let steps = libm::round(SCAN_MAX / SCAN_STEP) as usize;
        let first = (1..=steps).map(|k| k as f64 * SCAN_STEP).find(|&m| hit(m));
        let Some(mut hi) = first else {
            return f64::INFINITY;
        };
        let mut lo = hi - SCAN_STEP;
        if hit(lo) {
            return lo;
        }
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if hit(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    (scan(1.0), scan(-1.0))
}
