//! Synthetic worlds and a planar LiDAR.
//!
//! Objects follow piecewise maneuvers of constant acceleration and turn rate,
//! integrated exactly, so the ground truth is physically consistent and the
//! plausibility check's second-order expansion is genuinely exercised.
//!
//! Two archetypes are provided:
//!
//! * `Pedestrian`: a static ego at the origin next to a street running along x
//!   (sidewalks at `y = ±5.5`). Pedestrians walk the sidewalks and repeatedly
//!   cross the street.
//! * `Intersection`: the ego approaches a four-way crossing from the west and
//!   stops; vehicles enter from the other arms, go straight or turn, and
//!   pedestrians use the crosswalks.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::region::OrientedRegion;
use crate::rng::{substream, Purpose};
use crate::types::{normalize_angle, EgoPose, ObjectState, PointCloud2D};
use crate::{Error, Result};

/// Scenario archetype.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScenarioKind {
    /// Residential street with crossing pedestrians.
    #[default]
    Pedestrian,
    /// Urban four-way intersection with vehicles and pedestrians.
    Intersection,
}

/// Uncertainty margins attached to every generated state.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateMargins {
    /// Position margin along x (m).
    pub dx: f64,
    /// Position margin along y (m).
    pub dy: f64,
    /// Speed margin (m/s).
    pub dv: f64,
    /// Heading margin (rad); `None` leaves it to the checks' default.
    pub dtheta: Option<f64>,
    /// Length margin (m).
    pub dl: f64,
    /// Width margin (m).
    pub dw: f64,
}

/// Parameters of a generated world.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    /// Archetype.
    pub kind: ScenarioKind,
    /// Number of pedestrians.
    pub n_pedestrians: usize,
    /// Number of vehicles.
    pub n_vehicles: usize,
    /// Duration (s).
    pub duration: f64,
    /// Interval between frames (s).
    pub frame_dt: f64,
    /// Side of the square around the ego in which objects are reported (m).
    pub area: f64,
    /// Seed of the layout.
    pub seed: u64,
    /// Margins attached to every object state.
    pub margins: StateMargins,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::pedestrian()
    }
}

impl ScenarioConfig {
    /// Default pedestrian world: 12 pedestrians over 10 s.
    pub fn pedestrian() -> Self {
        Self {
            kind: ScenarioKind::Pedestrian,
            n_pedestrians: 12,
            n_vehicles: 0,
            duration: 10.0,
            frame_dt: 0.05,
            area: 100.0,
            seed: 0,
            margins: StateMargins::default(),
        }
    }

    /// Default intersection world: 14 vehicles and 10 pedestrians over 20 s.
    pub fn intersection() -> Self {
        Self { kind: ScenarioKind::Intersection, n_pedestrians: 10, n_vehicles: 14, duration: 20.0, ..Self::pedestrian() }
    }

    /// Checks positive duration, interval and area.
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_dt > 0.0 && self.frame_dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("scenario.frame_dt must be positive, got {}", self.frame_dt)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidConfig(format!("scenario.duration must be positive, got {}", self.duration)));
        }
        if !(self.area > 0.0) {
            return Err(Error::InvalidConfig(format!("scenario.area must be positive, got {}", self.area)));
        }
        let m = &self.margins;
        if [m.dx, m.dy, m.dv, m.dl, m.dw, m.dtheta.unwrap_or(0.0)].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig("scenario margins must be non-negative".into()));
        }
        Ok(())
    }

    /// Number of frames, `duration / frame_dt` rounded.
    pub fn frame_count(&self) -> u64 {
        libm::round(self.duration / self.frame_dt) as u64
    }
}

/// Planar LiDAR parameters.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarConfig {
    /// Angle between rays (rad).
    pub angular_resolution: f64,
    /// Maximum range (m).
    pub max_range: f64,
    /// Standard deviation of the range noise (m).
    pub range_noise_sigma: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self { angular_resolution: 0.2f64.to_radians(), max_range: 50.0, range_noise_sigma: 0.02 }
    }
}

impl LidarConfig {
    /// Checks positive resolution and range, non-negative noise.
    pub fn validate(&self) -> Result<()> {
        if !(self.angular_resolution > 0.0 && self.max_range > 0.0 && self.range_noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid lidar config {self:?}")));
        }
        Ok(())
    }

    /// Rays per revolution.
    pub fn ray_count(&self) -> usize {
        libm::ceil(TAU / self.angular_resolution) as usize
    }
}

/// Planar kinematic state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematic {
    /// x (m).
    pub x: f64,
    /// y (m).
    pub y: f64,
    /// Speed (m/s).
    pub v: f64,
    /// Heading (rad).
    pub theta: f64,
}

impl Kinematic {
    /// Exact CTRA motion over `tau` seconds with constant `a` and `omega`.
    pub fn advance(&self, tau: f64, a: f64, omega: f64) -> Kinematic {
        let v1 = self.v + a * tau;
        if omega.abs() < 1e-9 {
            let d = self.v * tau + 0.5 * a * tau * tau;
            return Kinematic {
                x: self.x + d * libm::cos(self.theta),
                y: self.y + d * libm::sin(self.theta),
                v: v1,
                theta: self.theta,
            };
        }
        let th1 = self.theta + omega * tau;
        let (s0, c0) = (libm::sin(self.theta), libm::cos(self.theta));
        let (s1, c1) = (libm::sin(th1), libm::cos(th1));
        let w2 = omega * omega;
        Kinematic {
            x: self.x + (v1 * s1 - self.v * s0) / omega + a * (c1 - c0) / w2,
            y: self.y + (-v1 * c1 + self.v * c0) / omega + a * (s1 - s0) / w2,
            v: v1,
            theta: normalize_angle(th1),
        }
    }
}

/// A segment of constant acceleration and turn rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maneuver {
    /// Duration (s).
    pub duration: f64,
    /// Acceleration (m/s²).
    pub a: f64,
    /// Turn rate (rad/s).
    pub omega: f64,
}

/// Piecewise-CTRA trajectory starting at `t0`; the object exists until the
/// last maneuver ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t0: f64,
    maneuvers: Vec<Maneuver>,
    // state at the start of every maneuver
    starts: Vec<Kinematic>,
    end_state: Kinematic,
}

impl Trajectory {
    /// Builds a trajectory from a start state and maneuvers.
    pub fn new(t0: f64, start: Kinematic, maneuvers: Vec<Maneuver>) -> Self {
        let mut starts = Vec::with_capacity(maneuvers.len());
        let mut k = start;
        for m in &maneuvers {
            starts.push(k);
            k = k.advance(m.duration, m.a, m.omega);
        }
        Self { t0, maneuvers, starts, end_state: k }
    }

    /// Start time.
    pub fn start_time(&self) -> f64 {
        self.t0
    }

    /// End time.
    pub fn end_time(&self) -> f64 {
        self.t0 + self.maneuvers.iter().map(|m| m.duration).sum::<f64>()
    }

    /// State at the end of the last maneuver.
    pub fn end_state(&self) -> Kinematic {
        self.end_state
    }

    /// State at time `t`, or `None` outside `[start, end]`.
    pub fn state_at(&self, t: f64) -> Option<Kinematic> {
        if t < self.t0 - 1e-9 {
            return None;
        }
        let mut begin = self.t0;
        for (m, k) in self.maneuvers.iter().zip(&self.starts) {
            if t <= begin + m.duration {
                return Some(k.advance((t - begin).max(0.0), m.a, m.omega));
            }
            begin += m.duration;
        }
        None
    }
}

/// A reported object: footprint plus trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    /// Object identifier.
    pub id: u64,
    /// Box length (m).
    pub length: f64,
    /// Box width (m).
    pub width: f64,
    /// Motion.
    pub trajectory: Trajectory,
}

/// A generated world: ground-truth objects and the ego trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Configuration it was generated from.
    pub config: ScenarioConfig,
    /// Object states sorted by `(frame, id)`.
    pub objects: Vec<ObjectState>,
    /// One ego pose per frame.
    pub ego: Vec<EgoPose>,
    /// Actors behind the object states.
    pub actors: Vec<Actor>,
}

impl Scenario {
    /// Object states of one frame.
    pub fn frame_objects(&self, frame: u64) -> &[ObjectState] {
        let lo = self.objects.partition_point(|o| o.frame < frame);
        let hi = self.objects.partition_point(|o| o.frame <= frame);
        &self.objects[lo..hi]
    }
}

const PED_SIZE: f64 = 0.5;
const CAR_LENGTH: f64 = 4.5;
const CAR_WIDTH: f64 = 2.0;
const PED_TURN_RATE: f64 = 3.0;

/// Generates a world. Deterministic under `config.seed`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let (ego_traj, actors) = match config.kind {
        ScenarioKind::Pedestrian => pedestrian_world(config),
        ScenarioKind::Intersection => intersection_world(config),
    };
    let n = config.frame_count();
    let half = 0.5 * config.area;
    let mut ego = Vec::with_capacity(n as usize);
    let mut objects = Vec::new();
    for frame in 0..n {
        let t = frame as f64 * config.frame_dt;
        let e = ego_traj.state_at(t).unwrap_or(ego_traj.end_state());
        ego.push(EgoPose { frame, t, x: e.x, y: e.y, theta: e.theta });
        for actor in &actors {
            let Some(k) = actor.trajectory.state_at(t) else { continue };
            if (k.x - e.x).abs() >= half - 1.0 || (k.y - e.y).abs() >= half - 1.0 {
                continue;
            }
            let mut o = ObjectState::new(actor.id, frame, t, k.x, k.y, k.v, k.theta, actor.length, actor.width);
            let m = &config.margins;
            (o.dx, o.dy, o.dv, o.dtheta, o.dl, o.dw) = (m.dx, m.dy, m.dv, m.dtheta, m.dl, m.dw);
            objects.push(o);
        }
    }
    objects.sort_by_key(|o| (o.frame, o.id));
    Ok(Scenario { config: *config, objects, ego, actors })
}

fn stationary(k: Kinematic, duration: f64) -> Trajectory {
    Trajectory::new(0.0, Kinematic { v: 0.0, ..k }, alloc::vec![Maneuver { duration, a: 0.0, omega: 0.0 }])
}

/// Builds maneuvers while tracking the resulting state.
struct Planner {
    k: Kinematic,
    elapsed: f64,
    maneuvers: Vec<Maneuver>,
}

impl Planner {
    fn new(k: Kinematic) -> Self {
        Self { k, elapsed: 0.0, maneuvers: Vec::new() }
    }

    fn push(&mut self, duration: f64, a: f64, omega: f64) {
        if duration <= 0.0 {
            return;
        }
        self.maneuvers.push(Maneuver { duration, a, omega });
        self.k = self.k.advance(duration, a, omega);
        self.elapsed += duration;
    }

    fn straight(&mut self, distance: f64) {
        if self.k.v > 0.0 {
            self.push(distance / self.k.v, 0.0, 0.0);
        }
    }

    // turn at constant speed to `heading` with turn-rate magnitude `rate`
    fn turn_to(&mut self, heading: f64, rate: f64) {
        let delta = normalize_angle(heading - self.k.theta);
        self.push(delta.abs() / rate, 0.0, rate.copysign(delta));
    }
}

fn pedestrian_world(config: &ScenarioConfig) -> (Trajectory, Vec<Actor>) {
    let total = config.duration + config.frame_dt;
    let ego = stationary(Kinematic { x: 0.0, y: 0.0, v: 0.0, theta: 0.0 }, total);
    let mut actors = Vec::new();
    for i in 0..config.n_pedestrians {
        let mut rng = substream(config.seed, Purpose::Scenario, 0, i as u64);
        let side: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let x0 = rng.random_range(6.0..22.0);
        let v = rng.random_range(0.5..2.0);
        let heading = if rng.random::<bool>() { 0.0 } else { PI };
        let mut p = Planner::new(Kinematic { x: x0, y: 5.5 * side, v, theta: heading });
        let mut y_side = side;
        while p.elapsed < total {
            // along the sidewalk, staying within x in [4, 27]
            let room = if p.k.theta.abs() < FRAC_PI_2 { 27.0 - p.k.x } else { p.k.x - 4.0 };
            let walk = rng.random_range(1.0..4.0) * v;
            p.straight(walk.min(room.max(0.0)));
            // cross the street
            let r = v / PED_TURN_RATE;
            p.turn_to(-FRAC_PI_2 * y_side, PED_TURN_RATE);
            p.straight(11.0 - 2.0 * r);
            y_side = -y_side;
            let next = if p.k.x < 15.5 { 0.0 } else { PI };
            p.turn_to(next, PED_TURN_RATE);
        }
        actors.push(Actor {
            id: actors.len() as u64 + 1,
            length: PED_SIZE,
            width: PED_SIZE,
            trajectory: Trajectory::new(0.0, Kinematic { x: x0, y: 5.5 * side, v, theta: heading }, p.maneuvers),
        });
    }
    for i in 0..config.n_vehicles {
        let mut rng = substream(config.seed, Purpose::Scenario, 1, i as u64);
        let v = rng.random_range(3.0..15.0);
        let t0 = rng.random_range(0.0..(0.6 * config.duration));
        let start = Kinematic { x: -45.0, y: 2.0, v, theta: 0.0 };
        let mut p = Planner::new(start);
        p.straight(90.0);
        actors.push(Actor {
            id: actors.len() as u64 + 1,
            length: CAR_LENGTH,
            width: CAR_WIDTH,
            trajectory: Trajectory::new(t0, start, p.maneuvers),
        });
    }
    (ego, actors)
}

fn intersection_world(config: &ScenarioConfig) -> (Trajectory, Vec<Actor>) {
    let total = config.duration + config.frame_dt;
    let ego_start = Kinematic { x: -40.0, y: -2.0, v: 8.0, theta: 0.0 };
    let ego = Trajectory::new(
        0.0,
        ego_start,
        alloc::vec![Maneuver { duration: 4.0, a: -2.0, omega: 0.0 }, Maneuver { duration: total, a: 0.0, omega: 0.0 }],
    );
    let mut actors = Vec::new();
    // entry poses of the east, north and south arms, right-hand traffic
    let arms = [
        Kinematic { x: 45.0, y: 2.0, v: 0.0, theta: PI },
        Kinematic { x: -2.0, y: 45.0, v: 0.0, theta: -FRAC_PI_2 },
        Kinematic { x: 2.0, y: -45.0, v: 0.0, theta: FRAC_PI_2 },
    ];
    for i in 0..config.n_vehicles {
        let mut rng = substream(config.seed, Purpose::Scenario, 1, i as u64);
        let arm = arms[i % arms.len()];
        let v = rng.random_range(3.0..15.0);
        let t0 = rng.random_range(0.0..(0.7 * config.duration));
        let start = Kinematic { v, ..arm };
        let mut p = Planner::new(start);
        // speed change on the approach, keeping v within [3, 15]
        let a: f64 = rng.random_range(-1.5..1.5);
        let t1: f64 = rng.random_range(0.5..2.0);
        let t1 = if a > 0.0 { t1.min((15.0 - v) / a) } else if a < 0.0 { t1.min((3.0 - v) / a) } else { t1 };
        p.push(t1, a, 0.0);
        let travelled = libm::hypot(p.k.x - arm.x, p.k.y - arm.y);
        p.straight((37.0 - travelled).max(0.0));
        let turn: u32 = rng.random_range(0..3);
        if turn > 0 {
            let radius = rng.random_range(6.0..10.0);
            let rate = p.k.v / radius;
            let target = p.k.theta + if turn == 1 { FRAC_PI_2 } else { -FRAC_PI_2 };
            p.turn_to(target, rate);
        }
        p.straight(55.0);
        actors.push(Actor {
            id: actors.len() as u64 + 1,
            length: CAR_LENGTH,
            width: CAR_WIDTH,
            trajectory: Trajectory::new(t0, start, p.maneuvers),
        });
    }
    // crosswalks 8 m from the center on every arm, 12 m long
    for i in 0..config.n_pedestrians {
        let mut rng = substream(config.seed, Purpose::Scenario, 2, i as u64);
        let v = rng.random_range(0.5..2.0);
        let t0 = rng.random_range(0.0..(0.5 * config.duration));
        let walk = rng.random_range(0..4u32);
        let forward = rng.random::<bool>();
        let along = if forward { 1.0 } else { -1.0 };
        // (start, heading) of the crossing
        let (x, y, theta) = match walk {
            0 => (8.0, -6.0 * along, FRAC_PI_2 * along),
            1 => (-8.0, -6.0 * along, FRAC_PI_2 * along),
            2 => (-6.0 * along, 8.0, if forward { 0.0 } else { PI }),
            _ => (-6.0 * along, -8.0, if forward { 0.0 } else { PI }),
        };
        let start = Kinematic { x, y, v, theta };
        let mut p = Planner::new(start);
        p.straight(rng.random_range(0.5..1.5));
        p.straight(12.0);
        let r = v / PED_TURN_RATE;
        let left = rng.random::<bool>();
        p.turn_to(theta + if left { FRAC_PI_2 } else { -FRAC_PI_2 }, PED_TURN_RATE);
        p.straight(rng.random_range(3.0..10.0) + r);
        actors.push(Actor {
            id: actors.len() as u64 + 1,
            length: PED_SIZE,
            width: PED_SIZE,
            trajectory: Trajectory::new(t0, start, p.maneuvers),
        });
    }
    (ego, actors)
}

/// LiDAR sweep with the id of the object hit by every point.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledCloud {
    /// The point cloud.
    pub cloud: PointCloud2D,
    /// Object id per point.
    pub owners: Vec<u64>,
}

/// Casts one sweep from the ego against the objects' bounding boxes.
///
/// Each ray returns the nearest hit within range, perturbed along the ray by
/// Gaussian range noise; rays that hit nothing return no point. Ties within
/// 1e-9 m go to the lower object id.
pub fn simulate_lidar_labelled(
    objects: &[ObjectState],
    ego: &EgoPose,
    config: &LidarConfig,
    seed: u64,
) -> Result<LabelledCloud> {
    config.validate()?;
    let boxes: Vec<(u64, OrientedRegion)> = objects.iter().map(|o| (o.id, OrientedRegion::bounding_box(o))).collect();
    let noise = (config.range_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, config.range_noise_sigma).expect("sigma is positive and finite"));
    let mut rng: ChaCha8Rng = substream(seed, Purpose::Lidar, ego.frame, 0);
    let origin = ego.position();
    let mut cloud = PointCloud2D::empty(ego.frame);
    let mut owners = Vec::new();
    for k in 0..config.ray_count() {
        let ang = ego.theta + k as f64 * config.angular_resolution;
        let dir = [libm::cos(ang), libm::sin(ang)];
        let mut best: Option<(f64, u64)> = None;
        for (id, b) in &boxes {
            let Some(t) = b.ray_hit(origin, dir) else { continue };
            if t > config.max_range {
                continue;
            }
            best = match best {
                Some((bt, bid)) if bt < t - 1e-9 || ((bt - t).abs() <= 1e-9 && bid < *id) => Some((bt, bid)),
                _ => Some((t, *id)),
            };
        }
        if let Some((t, id)) = best {
            let r = t + noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
            cloud.points.push([origin[0] + r * dir[0], origin[1] + r * dir[1]]);
            owners.push(id);
        }
    }
    Ok(LabelledCloud { cloud, owners })
}

/// Casts one sweep; see [`simulate_lidar_labelled`].
pub fn simulate_lidar(objects: &[ObjectState], ego: &EgoPose, config: &LidarConfig, seed: u64) -> Result<PointCloud2D> {
    simulate_lidar_labelled(objects, ego, config, seed).map(|l| l.cloud)
}
