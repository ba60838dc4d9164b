//! Sensor checks: verify reported objects against the occupancy grid.
//!
//! Each object covers a region `A_o`, its bounding box enlarged by a safety
//! margin and by its uncertainty margins. A grid cell counts as covered by an
//! object when the cell square and `A_o` overlap with positive area.
//!
//! * consistency `η(o)` is the largest occupancy among cells covered by `o`;
//!   `η < τ_tp` marks `o` as a false positive.
//! * conflict `κ(ζ)` is the occupancy of a cell covered by no object;
//!   `κ > τ_fn` marks the cell as a false negative.
//!
//! A position error shows up as both: the displaced object loses its evidence
//! and the evidence it left behind is uncovered. [`detect_position_errors`]
//! attributes false-negative cells to the nearest object within `r_attr`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::grid::{GridConfig, OccupancyGrid};
use crate::region::OrientedRegion;
use crate::types::ObjectState;
use crate::{Error, Result};

/// Thresholds and margins of the sensor checks.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorCheckParams {
    /// Consistency threshold `τ_tp`.
    pub tau_tp: f64,
    /// Conflict threshold `τ_fn`.
    pub tau_fn: f64,
    /// Safety margin added around every box (m).
    pub delta_safe: f64,
    /// Multiplier on the uncertainty margins, `γ_sens`.
    pub gamma_sens: f64,
    /// Radius within which a false-negative cell is attributed to an object (m).
    pub r_attr: f64,
}

impl Default for SensorCheckParams {
    fn default() -> Self {
        Self { tau_tp: 0.8, tau_fn: 0.8, delta_safe: 0.1, gamma_sens: 3.0, r_attr: 2.0 }
    }
}

impl SensorCheckParams {
    /// Checks thresholds in `(0, 1]` and non-negative margins.
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.tau_tp) || !unit(self.tau_fn) {
            return Err(Error::InvalidConfig(format!(
                "sensor thresholds must lie in (0, 1], got tau_tp={} tau_fn={}",
                self.tau_tp, self.tau_fn
            )));
        }
        if !(self.delta_safe >= 0.0 && self.gamma_sens >= 0.0 && self.r_attr >= 0.0) {
            return Err(Error::InvalidConfig("sensor margins must be non-negative".into()));
        }
        Ok(())
    }
}

/// Outcome of the consistency decision for one object.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// `η ≥ τ_tp`.
    TruePositive,
    /// `η < τ_tp`.
    FalsePositive,
}

/// Why an object was flagged with a position error.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    /// The object lacks sensor evidence.
    FalsePositive,
    /// Uncovered evidence was attributed to the object.
    ConflictAttribution,
    /// Both triggers fired.
    Both,
}

/// A cell whose evidence is covered by no object.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConflictCell {
    /// Column index.
    pub ix: usize,
    /// Row index.
    pub iy: usize,
    /// Cell center.
    pub center: [f64; 2],
    /// Conflict value `κ`.
    pub kappa: f64,
}

/// Per-object result of the sensor checks.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectVerdict {
    /// Object identifier.
    pub object_id: u64,
    /// Consistency `η`.
    pub eta: f64,
    /// Consistency decision.
    pub class: Classification,
    /// Whether a position error is reported.
    pub pos_error: bool,
    /// Trigger of the position error, if any.
    pub trigger: Option<Trigger>,
    /// Number of false-negative cells attributed to the object.
    pub attributed_cells: usize,
}

/// Sensor-check result for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorVerdict {
    /// Frame index.
    pub frame: u64,
    /// One verdict per object, in input order.
    pub objects: Vec<ObjectVerdict>,
    /// False-negative cells, row-major.
    pub fn_cells: Vec<ConflictCell>,
}

/// Covered region `A_o` of an object.
///
/// The box is enlarged by `delta_safe + gamma_sens * (dx + dl)` along its length
/// and `delta_safe + gamma_sens * (dy + dw)` across it.
pub fn object_region(o: &ObjectState, params: &SensorCheckParams) -> OrientedRegion {
    OrientedRegion::new(
        [o.x, o.y],
        0.5 * o.l + params.delta_safe + params.gamma_sens * (o.dx + o.dl),
        0.5 * o.w + params.delta_safe + params.gamma_sens * (o.dy + o.dw),
        o.theta,
    )
}

/// Coverage function: 1 if `zeta` lies in the region (boundary included), else 0.
pub fn coverage(zeta: [f64; 2], region: &OrientedRegion) -> u8 {
    u8::from(region.contains(zeta))
}

/// Consistency `η`: maximum occupancy over covered cells, 0 if none.
pub fn consistency(grid: &OccupancyGrid, region: &OrientedRegion) -> f64 {
    let mut eta = 0.0f64;
    grid.for_each_cell_in_region(region, |cell| eta = eta.max(cell.p));
    eta
}

/// Mask of cells covered by at least one region, row-major.
pub fn coverage_mask(grid: &OccupancyGrid, regions: &[OrientedRegion]) -> Vec<bool> {
    let side = grid.side();
    let mut mask = vec![false; side * side];
    for r in regions {
        grid.for_each_cell_in_region(r, |cell| mask[cell.iy * side + cell.ix] = true);
    }
    mask
}

/// Conflict `κ` for every cell: its occupancy if no region covers it, else 0.
/// Only cells with `κ > 0` are returned, row-major.
pub fn conflict_map(grid: &OccupancyGrid, regions: &[OrientedRegion]) -> Vec<ConflictCell> {
    let mask = coverage_mask(grid, regions);
    let side = grid.side();
    grid.occupied_cells()
        .filter(|c| !mask[c.iy * side + c.ix])
        .map(|c| ConflictCell { ix: c.ix, iy: c.iy, center: c.center, kappa: c.p })
        .collect()
}

/// Consistency decision per object: false positive iff `η < τ_tp`.
pub fn classify_objects(etas: &[f64], params: &SensorCheckParams) -> Vec<Classification> {
    etas.iter()
        .map(|&eta| if eta < params.tau_tp { Classification::FalsePositive } else { Classification::TruePositive })
        .collect()
}

/// Conflict decision: keeps the false-negative cells, `κ > τ_fn`.
pub fn classify_cells(conflicts: &[ConflictCell], params: &SensorCheckParams) -> Vec<ConflictCell> {
    conflicts.iter().copied().filter(|c| c.kappa > params.tau_fn).collect()
}

/// Flags position errors.
///
/// An object is flagged if it is a false positive, or if at least one
/// false-negative cell lies within `r_attr` of its region and no other
/// region is closer to that cell (ties flag every tied object).
pub fn detect_position_errors(
    regions: &[OrientedRegion],
    classes: &[Classification],
    fn_cells: &[ConflictCell],
    params: &SensorCheckParams,
) -> Vec<(bool, Option<Trigger>, usize)> {
    assert_eq!(regions.len(), classes.len(), "one classification per region");
    let mut attributed = vec![0usize; regions.len()];
    let mut nearest: Vec<usize> = Vec::new();
    for cell in fn_cells {
        let mut best = f64::INFINITY;
        nearest.clear();
        for (i, r) in regions.iter().enumerate() {
            let d = r.distance_to(cell.center);
            if d > params.r_attr {
                continue;
            }
            if d < best - 1e-9 {
                best = d;
                nearest.clear();
                nearest.push(i);
            } else if (d - best).abs() <= 1e-9 {
                nearest.push(i);
            }
        }
        for &i in &nearest {
            attributed[i] += 1;
        }
    }
    classes
        .iter()
        .zip(&attributed)
        .map(|(class, &n)| {
            let fp = *class == Classification::FalsePositive;
            let trigger = match (fp, n > 0) {
                (true, true) => Some(Trigger::Both),
                (true, false) => Some(Trigger::FalsePositive),
                (false, true) => Some(Trigger::ConflictAttribution),
                (false, false) => None,
            };
            (trigger.is_some(), trigger, n)
        })
        .collect()
}

/// Runs all sensor checks for one frame.
pub fn run_sensor_checks(grid: &OccupancyGrid, objects: &[ObjectState], params: &SensorCheckParams) -> SensorVerdict {
    let regions: Vec<OrientedRegion> = objects.iter().map(|o| object_region(o, params)).collect();
    let etas: Vec<f64> = regions.iter().map(|r| consistency(grid, r)).collect();
    let classes = classify_objects(&etas, params);
    let fn_cells = classify_cells(&conflict_map(grid, &regions), params);
    let flags = detect_position_errors(&regions, &classes, &fn_cells, params);
    let objects = objects
        .iter()
        .zip(etas.iter().zip(classes.iter().zip(flags)))
        .map(|(o, (&eta, (&class, (pos_error, trigger, attributed_cells))))| ObjectVerdict {
            object_id: o.id,
            eta,
            class,
            pos_error,
            trigger,
            attributed_cells,
        })
        .collect();
    SensorVerdict { frame: grid.frame(), objects, fn_cells }
}

/// Smallest position shift that the sensor checks are guaranteed to detect:
/// `√2 (c_grid + δ_safe) + γ_sens · ‖(Δx + ΔL, Δy + ΔW)‖`.
pub fn min_detectable_position_error(params: &SensorCheckParams, config: &GridConfig, o: &ObjectState) -> f64 {
    let sigma = libm::hypot(o.dx + o.dl, o.dy + o.dw);
    core::f64::consts::SQRT_2 * (config.cell_size + params.delta_safe) + params.gamma_sens * sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::types::{EgoPose, PointCloud2D};
    use proptest::prelude::*;

    fn grid(points: Vec<[f64; 2]>, cell: f64) -> OccupancyGrid {
        let cfg = GridConfig { extent: 20.0, cell_size: cell, saturation_count: 3 };
        build_grid(&PointCloud2D { frame: 0, points }, &EgoPose::default(), &cfg).unwrap()
    }

    fn saturate(at: [f64; 2]) -> Vec<[f64; 2]> {
        vec![at; 3]
    }

    fn car(id: u64, x: f64, y: f64) -> ObjectState {
        ObjectState::new(id, 0, 0.0, x, y, 0.0, 0.0, 4.5, 2.0)
    }

    #[test]
    fn region_half_sizes() {
        let mut o = car(1, 0.0, 0.0);
        o.dx = 0.1;
        o.dy = 0.1;
        let r = object_region(&o, &SensorCheckParams::default());
        assert!((r.half_length - 2.65).abs() < 1e-12);
        assert!((r.half_width - 1.4).abs() < 1e-12);
        let bare = object_region(&car(1, 0.0, 0.0), &SensorCheckParams::default());
        assert!((bare.half_length - 2.35).abs() < 1e-12);
        assert!((bare.half_width - 1.1).abs() < 1e-12);
    }

    #[test]
    fn consistency_is_max_over_covered_cells() {
        let params = SensorCheckParams::default();
        let o = car(1, 2.0, 2.0);
        let r = object_region(&o, &params);
        assert_eq!(consistency(&grid(vec![], 0.5), &r), 0.0);
        let mut pts = vec![[1.1, 2.1]];
        pts.extend([[2.6, 1.6]; 3]);
        pts.extend([[9.0, 9.0]; 3]);
        let g = grid(pts, 0.5);
        assert_eq!(consistency(&g, &r), 1.0);
        let g = grid(vec![[1.1, 2.1], [2.6, 1.6], [2.6, 1.6]], 0.5);
        assert!((consistency(&g, &r) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(coverage([2.0, 2.0], &r), 1);
        assert_eq!(coverage([9.0, 9.0], &r), 0);
    }

    #[test]
    fn uncovered_evidence_is_conflict() {
        let params = SensorCheckParams::default();
        let regions = [object_region(&car(1, 0.0, 0.0), &params)];
        let g = grid([saturate([0.2, 0.2]), saturate([8.2, 8.2])].concat(), 0.5);
        let conflicts = conflict_map(&g, &regions);
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].kappa, 1.0);
        assert_eq!(g.cell_index([8.2, 8.2]), Some((conflicts[0].ix, conflicts[0].iy)));
    }

    #[test]
    fn thresholds_are_strict_in_the_right_direction() {
        let params = SensorCheckParams::default();
        let classes = classify_objects(&[0.79, 0.8, 0.81], &params);
        assert_eq!(
            classes,
            [Classification::FalsePositive, Classification::TruePositive, Classification::TruePositive]
        );
        let cell = |kappa| ConflictCell { ix: 0, iy: 0, center: [0.0, 0.0], kappa };
        let kept = classify_cells(&[cell(0.79), cell(0.8), cell(0.81)], &params);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].kappa, 0.81);
    }

    #[test]
    fn clean_object_passes() {
        let params = SensorCheckParams::default();
        let o = car(7, 3.0, -2.0);
        let g = grid([saturate([3.1, -2.1]), saturate([5.1, -2.9])].concat(), 0.5);
        let v = run_sensor_checks(&g, &[o], &params);
        assert_eq!(v.objects[0].class, Classification::TruePositive);
        assert!(!v.objects[0].pos_error);
        assert!(v.fn_cells.is_empty());
    }

    #[test]
    fn displaced_object_is_flagged_by_both_triggers() {
        let params = SensorCheckParams::default();
        // evidence at the true position, object reported 3 m ahead
        let g = grid(saturate([1.0, 0.2]), 0.5);
        let v = run_sensor_checks(&g, &[car(1, 4.0, 0.2)], &params);
        let ov = v.objects[0];
        assert_eq!(ov.class, Classification::FalsePositive);
        assert_eq!(ov.trigger, Some(Trigger::Both));
        assert_eq!(ov.attributed_cells, 1);
    }

    #[test]
    fn nearby_conflict_is_attributed() {
        let params = SensorCheckParams::default();
        let o = car(1, 0.0, 0.0);
        let r = object_region(&o, &params);
        // saturated cell 0.3 m beyond the front edge, plus the object's own evidence
        let edge = r.half_length + 0.3;
        let g = grid([saturate([edge + 0.01, 0.1]), saturate([0.1, 0.1])].concat(), 0.2);
        let v = run_sensor_checks(&g, &[o], &params);
        assert_eq!(v.fn_cells.len(), 1);
        assert_eq!(v.objects[0].trigger, Some(Trigger::ConflictAttribution));

        // nearest object takes the cell, ties flag both
        let far = [v.fn_cells[0]];
        let regions = [r, OrientedRegion::new([9.0, 0.0], 1.0, 1.0, 0.0)];
        let classes = [Classification::TruePositive; 2];
        let flags = detect_position_errors(&regions, &classes, &far, &params);
        assert!(flags[0].0 && !flags[1].0);
        let mid = ConflictCell { ix: 0, iy: 0, center: [0.0, 3.0], kappa: 1.0 };
        let pair = [OrientedRegion::new([-1.5, 3.0], 1.0, 1.0, 0.0), OrientedRegion::new([1.5, 3.0], 1.0, 1.0, 0.0)];
        let flags = detect_position_errors(&pair, &classes, &[mid], &params);
        assert!(flags[0].0 && flags[1].0);
        // beyond r_attr nobody is flagged
        let lone = ConflictCell { center: [0.0, 10.0], ..mid };
        let flags = detect_position_errors(&pair, &classes, &[lone], &params);
        assert!(!flags[0].0 && !flags[1].0);
    }

    #[test]
    fn guaranteed_detectable_error() {
        let params = SensorCheckParams::default();
        let mut o = car(1, 0.0, 0.0);
        let half = GridConfig::default();
        assert!((min_detectable_position_error(&params, &half, &o) - 0.848_528).abs() < 1e-5);
        let fine = GridConfig { cell_size: 0.2, ..half };
        assert!((min_detectable_position_error(&params, &fine, &o) - 0.424_264).abs() < 1e-5);
        o.dx = 0.1;
        o.dy = 0.1;
        assert!((min_detectable_position_error(&params, &half, &o) - 1.272_792).abs() < 1e-5);
    }

    #[test]
    fn params_validation() {
        assert!(SensorCheckParams::default().validate().is_ok());
        assert!(SensorCheckParams { tau_tp: 0.0, ..Default::default() }.validate().is_err());
        assert!(SensorCheckParams { tau_fn: 1.5, ..Default::default() }.validate().is_err());
        assert!(SensorCheckParams { r_attr: -1.0, ..Default::default() }.validate().is_err());
    }

    // Independent coverage oracle: clip the region polygon against the cell
    // square and measure the remaining area.
    fn clipped_area(poly: &[[f64; 2]], min: [f64; 2], max: [f64; 2]) -> f64 {
        let mut pts: Vec<[f64; 2]> = poly.to_vec();
        let planes: [(usize, f64, bool); 4] = [(0, min[0], true), (0, max[0], false), (1, min[1], true), (1, max[1], false)];
        for (k, bound, keep_above) in planes {
            let inside = |p: &[f64; 2]| if keep_above { p[k] >= bound } else { p[k] <= bound };
            let mut out = Vec::new();
            for i in 0..pts.len() {
                let a = pts[i];
                let b = pts[(i + 1) % pts.len()];
                match (inside(&a), inside(&b)) {
                    (true, true) => out.push(b),
                    (true, false) | (false, true) => {
                        let t = (bound - a[k]) / (b[k] - a[k]);
                        let cut = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                        out.push(cut);
                        if inside(&b) {
                            out.push(b);
                        }
                    }
                    (false, false) => {}
                }
            }
            pts = out;
            if pts.is_empty() {
                return 0.0;
            }
        }
        let mut twice = 0.0;
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            twice += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * twice.abs()
    }

    fn brute(g: &OccupancyGrid, r: &OrientedRegion, min_area: f64) -> Vec<(usize, usize)> {
        let corners = r.corners();
        g.cells()
            .filter(|c| {
                let (lo, hi) = g.cell_bounds(c.ix, c.iy);
                clipped_area(&corners, lo, hi) > min_area
            })
            .map(|c| (c.ix, c.iy))
            .collect()
    }

    type Scene = (Vec<[f64; 2]>, Vec<(f64, f64, f64, f64, f64)>);

    fn scene() -> impl Strategy<Value = Scene> {
        (
            proptest::collection::vec((-9.0f64..9.0, -9.0f64..9.0).prop_map(|(x, y)| [x, y]), 0..200),
            proptest::collection::vec((-8.0f64..8.0, -8.0f64..8.0, 0.2f64..3.0, 0.2f64..2.0, -3.2f64..3.2), 1..5),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eta_and_kappa_match_area_oracle((points, objs) in scene()) {
            let g = grid(points, 0.5);
            let regions: Vec<OrientedRegion> =
                objs.iter().map(|&(x, y, hl, hw, th)| OrientedRegion::new([x, y], hl, hw, th)).collect();
            // cells with a clearly positive overlap must be covered; cells with
            // none must not be. Slivers below 1e-9 m² may go either way.
            let mut sure = std::collections::BTreeSet::new();
            let mut maybe = std::collections::BTreeSet::new();
            for r in &regions {
                let strict = brute(&g, r, 1e-9);
                let loose = brute(&g, r, 0.0);
                let eta_lo = strict.iter().map(|&(ix, iy)| g.probability(ix, iy)).fold(0.0, f64::max);
                let eta_hi = loose.iter().map(|&(ix, iy)| g.probability(ix, iy)).fold(0.0, f64::max);
                let eta = consistency(&g, r);
                prop_assert!(eta_lo <= eta && eta <= eta_hi);
                sure.extend(strict);
                maybe.extend(loose);
            }
            let kappa: std::collections::BTreeMap<(usize, usize), f64> =
                conflict_map(&g, &regions).into_iter().map(|c| ((c.ix, c.iy), c.kappa)).collect();
            for c in g.occupied_cells() {
                let key = (c.ix, c.iy);
                if sure.contains(&key) {
                    prop_assert!(!kappa.contains_key(&key));
                } else if !maybe.contains(&key) {
                    prop_assert_eq!(kappa.get(&key).copied(), Some(c.p));
                }
            }
        }

        #[test]
        fn every_occupied_cell_is_covered_or_conflicting((points, objs) in scene()) {
            let g = grid(points, 0.5);
            let regions: Vec<OrientedRegion> =
                objs.iter().map(|&(x, y, hl, hw, th)| OrientedRegion::new([x, y], hl, hw, th)).collect();
            let mask = coverage_mask(&g, &regions);
            let conflicts = conflict_map(&g, &regions);
            let uncovered = g.occupied_cells().filter(|c| !mask[c.iy * g.side() + c.ix]).count();
            prop_assert_eq!(conflicts.len(), uncovered);
            prop_assert!(conflicts.iter().all(|c| c.kappa > 0.0 && c.kappa <= 1.0));
        }

        #[test]
        fn shift_beyond_bound_is_always_detected(
            x in -5.0f64..5.0, y in -5.0f64..5.0, th in -3.2f64..3.2, ang in -3.2f64..3.2, extra in 0.0f64..1.0,
        ) {
            // evidence fills the true box; the report is shifted past the bound
            let params = SensorCheckParams::default();
            let cfg = GridConfig { extent: 20.0, cell_size: 0.5, saturation_count: 3 };
            let truth = ObjectState::new(1, 0, 0.0, x, y, 0.0, th, 0.6, 0.6);
            let bbox = OrientedRegion::bounding_box(&truth);
            let mut points = Vec::new();
            for i in 0..=12 {
                for j in 0..=12 {
                    let (u, v) = (-0.3 + 0.05 * i as f64, -0.3 + 0.05 * j as f64);
                    let (a, b) = bbox.axes();
                    points.extend([[x + u * a[0] + v * b[0], y + u * a[1] + v * b[1]]; 3]);
                }
            }
            let g = build_grid(&PointCloud2D { frame: 0, points }, &EgoPose::default(), &cfg).unwrap();
            let d = min_detectable_position_error(&params, &cfg, &truth) + 0.6 + extra;
            let mut reported = truth;
            reported.x += d * libm::cos(ang);
            reported.y += d * libm::sin(ang);
            let v = run_sensor_checks(&g, &[reported], &params);
            prop_assert!(v.objects[0].pos_error);
        }
    }
}
