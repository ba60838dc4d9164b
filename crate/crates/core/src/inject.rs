//! Fault injection into a ground-truth object stream.
//!
//! Every injector returns the modified stream together with a ledger holding
//! one [`InjectedError`] per modified object-frame. Random choices come from
//! per-`(frame, object)` substreams, so the output does not depend on stream
//! order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::rng::{substream, Purpose};
use crate::types::{EgoPose, ErrorKind, InjectedError, ObjectState};
use crate::{Error, Result};

/// Direction of injected position shifts relative to the ego.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Away from the ego.
    #[default]
    RadialOutward,
    /// Toward the ego.
    RadialInward,
}

/// Temporal pattern of a speed error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedMode {
    /// Every frame of every object.
    Permanent,
    /// Single object-frames, each selected with the given probability.
    Transient(f64),
}

/// Parameters of one injection run.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionConfig {
    /// Fault kind.
    pub kind: ErrorKind,
    /// Shift (m) for position kinds, signed speed offset (m/s) for speed kinds.
    pub magnitude: f64,
    /// Per object-frame probability for random kinds.
    pub rate: f64,
    /// Standard deviation of the position noise (m).
    pub noise_sigma: f64,
    /// Margin inflation per unit of noise: `dx += margin_scale * σ`.
    pub margin_scale: f64,
    /// Seed of all random draws.
    pub seed: u64,
    /// Direction of position shifts.
    pub direction: Direction,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            kind: ErrorKind::PositionPermanent,
            magnitude: 0.0,
            rate: 0.1,
            noise_sigma: 0.0,
            margin_scale: 2.0,
            seed: 0,
            direction: Direction::RadialOutward,
        }
    }
}

impl InjectionConfig {
    /// Checks `rate ∈ [0, 1]`, non-negative sigma and, for position kinds, magnitude.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::InvalidConfig(format!("inject.rate must lie in [0, 1], got {}", self.rate)));
        }
        if !(self.noise_sigma >= 0.0 && self.margin_scale >= 0.0) {
            return Err(Error::InvalidConfig("inject.noise_sigma and inject.margin_scale must be non-negative".into()));
        }
        if !self.magnitude.is_finite() || (self.kind.is_position() && self.magnitude < 0.0) {
            return Err(Error::InvalidConfig(format!("inject.magnitude invalid for {}: {}", self.kind.as_str(), self.magnitude)));
        }
        Ok(())
    }
}

/// Output of an injector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Injection {
    /// The modified stream, in input order.
    pub stream: Vec<ObjectState>,
    /// One entry per modified object-frame, in stream order.
    pub ledger: Vec<InjectedError>,
    /// `(frame, object_id)` of states left untouched because the object sits
    /// on the ego position and has no radial direction.
    pub skipped: Vec<(u64, u64)>,
}

/// Runs the injector selected by `config.kind`, then adds noise if
/// `config.noise_sigma > 0`.
pub fn apply(stream: &[ObjectState], ego: &[EgoPose], config: &InjectionConfig) -> Result<Injection> {
    config.validate()?;
    let mut out = match config.kind {
        ErrorKind::PositionPermanent => inject_permanent_position(stream, config.magnitude, ego, config.direction)?,
        ErrorKind::PositionRandom => {
            inject_random_position(stream, config.magnitude, config.rate, config.seed, ego, config.direction)?
        }
        ErrorKind::SpeedPermanent => inject_speed_error(stream, config.magnitude, SpeedMode::Permanent, config.seed),
        ErrorKind::SpeedTransient => {
            inject_speed_error(stream, config.magnitude, SpeedMode::Transient(config.rate), config.seed)
        }
        ErrorKind::Noise => Injection { stream: stream.to_vec(), ..Injection::default() },
    };
    if config.noise_sigma > 0.0 {
        out.stream = add_gaussian_noise(&out.stream, config.noise_sigma, config.seed, config.margin_scale);
    }
    Ok(out)
}

fn ego_lookup(ego: &[EgoPose]) -> BTreeMap<u64, [f64; 2]> {
    ego.iter().map(|e| (e.frame, e.position())).collect()
}

fn radial_shift(
    o: &ObjectState,
    ego: &BTreeMap<u64, [f64; 2]>,
    magnitude: f64,
    direction: Direction,
) -> Result<Option<[f64; 2]>> {
    let e = ego
        .get(&o.frame)
        .ok_or_else(|| Error::FrameMismatch(format!("no ego pose for frame {}", o.frame)))?;
    let (rx, ry) = (o.x - e[0], o.y - e[1]);
    let r = libm::hypot(rx, ry);
    if r < 1e-9 {
        return Ok(None);
    }
    let s = match direction {
        Direction::RadialOutward => magnitude / r,
        Direction::RadialInward => -magnitude / r,
    };
    Ok(Some([s * rx, s * ry]))
}

fn shift_where(
    stream: &[ObjectState],
    ego: &[EgoPose],
    magnitude: f64,
    direction: Direction,
    kind: ErrorKind,
    mut select: impl FnMut(&ObjectState) -> bool,
) -> Result<Injection> {
    if !(magnitude >= 0.0) {
        return Err(Error::InvalidConfig(format!("position magnitude must be non-negative, got {magnitude}")));
    }
    let ego = ego_lookup(ego);
    let mut out = Injection { stream: Vec::with_capacity(stream.len()), ..Injection::default() };
    for o in stream {
        let mut s = *o;
        if select(o) {
            match radial_shift(o, &ego, magnitude, direction)? {
                Some([dx, dy]) => {
                    s.x += dx;
                    s.y += dy;
                    out.ledger.push(InjectedError {
                        frame: o.frame,
                        object_id: o.id,
                        kind,
                        magnitude,
                        dx_applied: Some(dx),
                        dy_applied: Some(dy),
                        dv_applied: None,
                        clamped: false,
                    });
                }
                None => out.skipped.push((o.frame, o.id)),
            }
        }
        out.stream.push(s);
    }
    Ok(out)
}

/// Shifts every state by `magnitude` along the ego-to-object direction.
pub fn inject_permanent_position(
    stream: &[ObjectState],
    magnitude: f64,
    ego: &[EgoPose],
    direction: Direction,
) -> Result<Injection> {
    shift_where(stream, ego, magnitude, direction, ErrorKind::PositionPermanent, |_| true)
}

/// Shifts each state with probability `rate`.
pub fn inject_random_position(
    stream: &[ObjectState],
    magnitude: f64,
    rate: f64,
    seed: u64,
    ego: &[EgoPose],
    direction: Direction,
) -> Result<Injection> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("rate must lie in [0, 1], got {rate}")));
    }
    shift_where(stream, ego, magnitude, direction, ErrorKind::PositionRandom, |o| {
        selected(seed, Purpose::PositionFault, o, rate)
    })
}

fn selected(seed: u64, purpose: Purpose, o: &ObjectState, rate: f64) -> bool {
    substream(seed, purpose, o.frame, o.id).random::<f64>() < rate
}

/// Adds `delta` to the speed of the selected states.
///
/// Positions are untouched. A speed that would turn negative is clamped to
/// zero and the ledger entry marked `clamped`.
pub fn inject_speed_error(stream: &[ObjectState], delta: f64, mode: SpeedMode, seed: u64) -> Injection {
    let kind = match mode {
        SpeedMode::Permanent => ErrorKind::SpeedPermanent,
        SpeedMode::Transient(_) => ErrorKind::SpeedTransient,
    };
    let mut out = Injection { stream: Vec::with_capacity(stream.len()), ..Injection::default() };
    for o in stream {
        let mut s = *o;
        let hit = match mode {
            SpeedMode::Permanent => true,
            SpeedMode::Transient(rate) => selected(seed, Purpose::SpeedFault, o, rate),
        };
        if hit {
            let raw = o.v + delta;
            s.v = raw.max(0.0);
            out.ledger.push(InjectedError {
                frame: o.frame,
                object_id: o.id,
                kind,
                magnitude: delta.abs(),
                dx_applied: None,
                dy_applied: None,
                dv_applied: Some(s.v - o.v),
                clamped: raw < 0.0,
            });
        }
        out.stream.push(s);
    }
    out
}

/// Perturbs `x` and `y` by independent `N(0, σ²)` draws and widens the
/// position margins by `margin_scale * σ`. Not an error: no ledger.
pub fn add_gaussian_noise(stream: &[ObjectState], sigma: f64, seed: u64, margin_scale: f64) -> Vec<ObjectState> {
    if !(sigma > 0.0) {
        return stream.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    stream
        .iter()
        .map(|o| {
            let mut rng = substream(seed, Purpose::Noise, o.frame, o.id);
            let mut s = *o;
            s.x += normal.sample(&mut rng);
            s.y += normal.sample(&mut rng);
            s.dx += margin_scale * sigma;
            s.dy += margin_scale * sigma;
            s
        })
        .collect()
}
