//! Evaluation: run both checks over an injected stream and score the flags
//! against the injection ledger.
//!
//! A ground-truth object-frame is *visible* when the sensor supports it: its
//! true footprint has consistency `η ≥ τ_tp` on the frame's grid. Sensor flags
//! on invisible object-frames carry no information (the object would be flagged
//! with or without an error), so they are neither credited nor charged.
//!
//! Rows per grid point:
//!
//! * `Sensor`: visible sensor flags against every ledger entry (raw recall).
//! * `SensorVisible`: visible sensor flags against entries on visible
//!   object-frames (occlusion-adjusted recall).
//! * `Plausibility`: plausibility flags against every entry.
//! * `Combined`: union of visible sensor flags and plausibility flags.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::grid::{build_grid, GridConfig};
use crate::inject::{apply, InjectionConfig};
use crate::plausibility::{PlausibilityMonitor, PlausibilityParams, PlausibilityVerdict};
use crate::scenario::{generate_scenario, simulate_lidar, LidarConfig, ScenarioConfig, ScenarioKind};
use crate::sensor::{consistency, object_region, run_sensor_checks, SensorCheckParams, SensorVerdict};
use crate::types::{EgoPose, ErrorKind, InjectedError, ObjectState, PointCloud2D};
use crate::{Error, Result};

/// Which flags a metrics row scores.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CheckKind {
    /// Sensor checks, raw recall over all entries.
    Sensor,
    /// Sensor checks restricted to visible object-frames.
    SensorVisible,
    /// Plausibility checks.
    Plausibility,
    /// Union of sensor and plausibility flags.
    Combined,
}

impl CheckKind {
    /// All kinds in row order.
    pub const ALL: [CheckKind; 4] = [CheckKind::Sensor, CheckKind::SensorVisible, CheckKind::Plausibility, CheckKind::Combined];

    /// Name used in tables.
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckKind::Sensor => "Sensor",
            CheckKind::SensorVisible => "SensorVisible",
            CheckKind::Plausibility => "Plausibility",
            CheckKind::Combined => "Combined",
        }
    }
}

/// Parameters of both checks.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MonitorParams {
    /// Occupancy grid.
    pub grid: GridConfig,
    /// Sensor checks.
    pub sensor: SensorCheckParams,
    /// Plausibility checks.
    pub plausibility: PlausibilityParams,
}

impl MonitorParams {
    /// Validates all parts.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.sensor.validate()?;
        self.plausibility.validate()
    }
}

/// Outcome of both checks for one object-frame.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectRecord {
    /// Frame.
    pub frame: u64,
    /// Object identifier.
    pub object_id: u64,
    /// Consistency of the ground-truth footprint.
    pub gt_eta: f64,
    /// Whether the sensor supports the ground-truth object.
    pub visible: bool,
    /// Sensor position-error flag.
    pub sensor: bool,
    /// Plausibility flag.
    pub plausibility: bool,
}

/// Verdicts of a monitor run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonitorRun {
    /// One record per object-frame, sorted by `(frame, object_id)`.
    pub records: Vec<ObjectRecord>,
    /// Sensor verdicts per frame.
    pub sensor: Vec<SensorVerdict>,
    /// Plausibility verdicts, in record order.
    pub plausibility: Vec<PlausibilityVerdict>,
}

fn group_by_frame(stream: &[ObjectState]) -> BTreeMap<u64, Vec<ObjectState>> {
    let mut out: BTreeMap<u64, Vec<ObjectState>> = BTreeMap::new();
    for o in stream {
        out.entry(o.frame).or_default().push(*o);
    }
    for v in out.values_mut() {
        v.sort_by_key(|o| o.id);
    }
    out
}

/// Runs both checks on every frame of `injected`, with ground truth `gt`
/// deciding visibility.
///
/// `clouds` and `ego` hold one entry per frame, in the same frame order; the
/// two object streams must contain the same `(frame, id)` pairs.
pub fn run_monitor(
    gt: &[ObjectState],
    injected: &[ObjectState],
    clouds: &[PointCloud2D],
    ego: &[EgoPose],
    params: &MonitorParams,
) -> Result<MonitorRun> {
    params.validate()?;
    if clouds.len() != ego.len() || clouds.iter().zip(ego).any(|(c, e)| c.frame != e.frame) {
        return Err(Error::FrameMismatch(format!("{} clouds for {} ego poses", clouds.len(), ego.len())));
    }
    let gt_frames = group_by_frame(gt);
    let inj_frames = group_by_frame(injected);
    let keys = |m: &BTreeMap<u64, Vec<ObjectState>>| -> Vec<(u64, u64)> {
        m.iter().flat_map(|(f, v)| v.iter().map(move |o| (*f, o.id))).collect()
    };
    if keys(&gt_frames) != keys(&inj_frames) {
        return Err(Error::FrameMismatch("ground-truth and injected streams hold different object-frames".into()));
    }
    if let Some(f) = gt_frames.keys().find(|f| !ego.iter().any(|e| e.frame == **f)) {
        return Err(Error::FrameMismatch(format!("objects at frame {f} without an ego pose")));
    }
    let empty = Vec::new();
    let mut plaus = PlausibilityMonitor::new(params.plausibility);
    let mut run = MonitorRun::default();
    for (cloud, pose) in clouds.iter().zip(ego) {
        let grid = build_grid(cloud, pose, &params.grid)?;
        let objs = inj_frames.get(&pose.frame).unwrap_or(&empty);
        let truth = gt_frames.get(&pose.frame).unwrap_or(&empty);
        let sv = run_sensor_checks(&grid, objs, &params.sensor);
        let pv = plaus.check_frame(objs)?;
        for ((o, s), (p, g)) in objs.iter().zip(&sv.objects).zip(pv.iter().zip(truth)) {
            let gt_eta = consistency(&grid, &object_region(g, &params.sensor));
            run.records.push(ObjectRecord {
                frame: pose.frame,
                object_id: o.id,
                gt_eta,
                visible: gt_eta >= params.sensor.tau_tp,
                sensor: s.pos_error,
                plausibility: !p.plausible,
            });
        }
        run.sensor.push(sv);
        run.plausibility.extend(pv);
    }
    Ok(run)
}

/// Outcome of matching flags to ledger entries.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    /// Entries matched by a flag.
    pub tp: usize,
    /// Flags explained by no entry.
    pub fp: usize,
    /// Entries without a flag.
    pub fn_: usize,
    /// Unmatched flags inside the window of an entry of the same object.
    pub explained: usize,
}

impl MatchCounts {
    /// `tp / (tp + fp)`, 1 when both are zero.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, 1 when both are zero.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Matches flags to ledger entries, both given as `(frame, object_id)`.
///
/// Entries are taken in `(frame, object_id)` order; each consumes the earliest
/// unconsumed flag of the same object at a frame in `[frame, frame + window]`.
/// A leftover flag inside the window of some entry of the same object is a
/// follow-up detection of that error and counts as explained; other leftover
/// flags are false positives.
pub fn match_detections(flags: &[(u64, u64)], ledger: &[(u64, u64)], window: u64) -> MatchCounts {
    let mut by_object: BTreeMap<u64, Vec<(u64, bool)>> = BTreeMap::new();
    for &(frame, id) in flags {
        by_object.entry(id).or_default().push((frame, false));
    }
    for v in by_object.values_mut() {
        v.sort_unstable();
    }
    let mut entries = ledger.to_vec();
    entries.sort_unstable();
    let mut counts = MatchCounts::default();
    for &(frame, id) in &entries {
        let hit = by_object.get_mut(&id).and_then(|v| {
            let start = v.partition_point(|(f, _)| *f < frame);
            v[start..].iter_mut().take_while(|(f, _)| *f <= frame + window).find(|(_, used)| !*used)
        });
        match hit {
            Some(flag) => {
                flag.1 = true;
                counts.tp += 1;
            }
            None => counts.fn_ += 1,
        }
    }
    let mut windows: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &(frame, id) in &entries {
        windows.entry(id).or_default().push(frame);
    }
    for (id, v) in &by_object {
        let starts = windows.get(id).map(Vec::as_slice).unwrap_or(&[]);
        for &(frame, used) in v {
            if used {
                continue;
            }
            // entries are sorted: look for one starting in [frame - window, frame]
            let lo = starts.partition_point(|s| *s + window < frame);
            if starts.get(lo).is_some_and(|s| *s <= frame) {
                counts.explained += 1;
            } else {
                counts.fp += 1;
            }
        }
    }
    counts
}

/// One line of a metrics table.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Scenario label, including the grid cell size.
    pub scenario: String,
    /// Scored check.
    pub check: CheckKind,
    /// Injected fault kind.
    pub error_kind: ErrorKind,
    /// Fault magnitude; the noise sigma for noise runs.
    pub magnitude: f64,
    /// Injection rate.
    pub rate: f64,
    /// True positives.
    pub tp: usize,
    /// False positives.
    pub fp: usize,
    /// False negatives.
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
    /// Precision.
    pub precision: f64,
    /// Recall.
    pub recall: f64,
    /// False positives per scored object-frame.
    pub false_alarm_rate: f64,
}

/// Scores a monitor run against a ledger; one row per [`CheckKind`].
pub fn score(
    run: &MonitorRun,
    ledger: &[InjectedError],
    window: u64,
    label: &str,
    kind: ErrorKind,
    magnitude: f64,
    rate: f64,
) -> Vec<MetricsRow> {
    let visible: BTreeSet<(u64, u64)> =
        run.records.iter().filter(|r| r.visible).map(|r| (r.frame, r.object_id)).collect();
    let entries: Vec<(u64, u64)> = ledger.iter().map(|e| (e.frame, e.object_id)).collect();
    let visible_entries: Vec<(u64, u64)> = entries.iter().copied().filter(|k| visible.contains(k)).collect();
    let pick = |f: &dyn Fn(&ObjectRecord) -> bool| -> Vec<(u64, u64)> {
        run.records.iter().filter(|r| f(r)).map(|r| (r.frame, r.object_id)).collect()
    };
    let sensor = pick(&|r| r.visible && r.sensor);
    let plaus = pick(&|r| r.plausibility);
    let combined = pick(&|r| (r.visible && r.sensor) || r.plausibility);
    CheckKind::ALL
        .iter()
        .map(|&check| {
            let (flags, led, scope) = match check {
                CheckKind::Sensor => (&sensor, &entries, visible.len()),
                CheckKind::SensorVisible => (&sensor, &visible_entries, visible.len()),
                CheckKind::Plausibility => (&plaus, &entries, run.records.len()),
                CheckKind::Combined => (&combined, &entries, run.records.len()),
            };
            let m = match_detections(flags, led, window);
            MetricsRow {
                scenario: label.into(),
                check,
                error_kind: kind,
                magnitude,
                rate,
                tp: m.tp,
                fp: m.fp,
                fn_: m.fn_,
                precision: m.precision(),
                recall: m.recall(),
                false_alarm_rate: if scope == 0 { 0.0 } else { m.fp as f64 / scope as f64 },
            }
        })
        .collect()
}

/// A grid of experiments over one scenario.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// World.
    pub scenario: ScenarioConfig,
    /// Sensor model.
    pub lidar: LidarConfig,
    /// Check parameters; the grid cell size is overridden by `cell_sizes`.
    pub monitor: MonitorParams,
    /// Fault kind, seed, noise margin scale and direction.
    pub injection: InjectionConfig,
    /// Grid cell sizes (m).
    pub cell_sizes: Vec<f64>,
    /// Fault magnitudes.
    pub magnitudes: Vec<f64>,
    /// Injection rates.
    pub rates: Vec<f64>,
    /// Position noise levels (m).
    pub noise_sigmas: Vec<f64>,
    /// Detection window (frames).
    pub window: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::pedestrian(),
            lidar: LidarConfig::default(),
            monitor: MonitorParams::default(),
            injection: InjectionConfig::default(),
            cell_sizes: alloc::vec![0.5],
            magnitudes: alloc::vec![0.0],
            rates: alloc::vec![0.1],
            noise_sigmas: alloc::vec![0.0],
            window: 2,
        }
    }
}

/// World shared by all points of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    /// Ground-truth objects.
    pub objects: Vec<ObjectState>,
    /// Ego poses, one per frame.
    pub ego: Vec<EgoPose>,
    /// LiDAR sweeps, one per frame.
    pub clouds: Vec<PointCloud2D>,
}

/// Generates the scenario and its LiDAR sweeps.
pub fn build_world(scenario: &ScenarioConfig, lidar: &LidarConfig) -> Result<World> {
    let s = generate_scenario(scenario)?;
    let clouds = s
        .ego
        .iter()
        .map(|e| simulate_lidar(s.frame_objects(e.frame), e, lidar, scenario.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(World { objects: s.objects, ego: s.ego, clouds })
}

/// Row label of a scenario at a grid cell size, e.g. `pedestrian/c0.5`.
pub fn scenario_label(kind: ScenarioKind, cell_size: f64) -> String {
    let name = match kind {
        ScenarioKind::Pedestrian => "pedestrian",
        ScenarioKind::Intersection => "intersection",
    };
    format!("{name}/c{cell_size}")
}

/// Runs every grid point of `spec` and returns the metrics rows in
/// `(cell size, noise, magnitude, rate, check)` order.
pub fn sweep(spec: &ExperimentSpec) -> Result<Vec<MetricsRow>> {
    let world = build_world(&spec.scenario, &spec.lidar)?;
    sweep_world(spec, &world)
}

/// [`sweep`] on a prebuilt world.
pub fn sweep_world(spec: &ExperimentSpec, world: &World) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for &cell in &spec.cell_sizes {
        let monitor = MonitorParams { grid: GridConfig { cell_size: cell, ..spec.monitor.grid }, ..spec.monitor };
        let label = scenario_label(spec.scenario.kind, cell);
        for &sigma in &spec.noise_sigmas {
            for &magnitude in &spec.magnitudes {
                for &rate in &spec.rates {
                    let cfg = InjectionConfig { magnitude, rate, noise_sigma: sigma, ..spec.injection };
                    let inj = apply(&world.objects, &world.ego, &cfg)?;
                    let run = run_monitor(&world.objects, &inj.stream, &world.clouds, &world.ego, &monitor)?;
                    let shown = if cfg.kind == ErrorKind::Noise { sigma } else { magnitude };
                    rows.extend(score(&run, &inj.ledger, spec.window, &label, cfg.kind, shown, rate));
                }
            }
        }
    }
    Ok(rows)
}
