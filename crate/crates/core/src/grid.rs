//! Static occupancy grid built from a single LiDAR sweep.
//!
//! The grid is a square, axis-aligned with the world frame and re-centered on
//! the ego each frame, with its origin snapped to the cell lattice. Each point
//! falling in a cell raises the cell's occupancy linearly until
//! `saturation_count` points make it certain: `P = min(1, n / N_sat)`.
//! Cells are half-open: `[min, min + cell_size)` on both axes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::region::OrientedRegion;
use crate::types::{EgoPose, PointCloud2D};
use crate::{Error, Result};

/// Grid geometry and the count-to-probability mapping.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    /// Side length of the square region around the ego (m).
    pub extent: f64,
    /// Cell size (m).
    pub cell_size: f64,
    /// Number of points that saturate a cell at probability 1.
    pub saturation_count: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { extent: 100.0, cell_size: 0.5, saturation_count: 3 }
    }
}

impl GridConfig {
    /// Checks `extent > 0`, `cell_size > 0`, an integer cell count and `N_sat >= 1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid.extent must be positive, got {}", self.extent)));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("grid.cell_size must be positive, got {}", self.cell_size)));
        }
        let ratio = self.extent / self.cell_size;
        if (ratio - libm::round(ratio)).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "grid.extent {} is not a multiple of grid.cell_size {}",
                self.extent, self.cell_size
            )));
        }
        if self.saturation_count < 1 {
            return Err(Error::InvalidConfig("grid.saturation_count must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of cells along one side.
    pub fn cells_per_side(&self) -> usize {
        libm::round(self.extent / self.cell_size) as usize
    }
}

/// Point accounting of one grid build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildStats {
    /// Points that landed in a cell.
    pub accepted: usize,
    /// Points outside the grid extent.
    pub dropped: usize,
}

/// One cell of a grid together with its geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    /// Column index.
    pub ix: usize,
    /// Row index.
    pub iy: usize,
    /// Cell center in world coordinates.
    pub center: [f64; 2],
    /// Occupancy probability.
    pub p: f64,
}

/// A 2D grid of occupancy probabilities `P(ζ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    frame: u64,
    config: GridConfig,
    origin: [f64; 2],
    side: usize,
    cells: Vec<f64>,
    occupied: Vec<usize>,
    stats: BuildStats,
}

/// Builds the grid for one sweep around the ego pose.
pub fn build_grid(cloud: &PointCloud2D, ego: &EgoPose, config: &GridConfig) -> Result<OccupancyGrid> {
    config.validate()?;
    if cloud.frame != ego.frame {
        return Err(Error::FrameMismatch(format!("cloud frame {} vs ego frame {}", cloud.frame, ego.frame)));
    }
    let c = config.cell_size;
    let half = 0.5 * config.extent;
    let origin = [libm::floor((ego.x - half) / c) * c, libm::floor((ego.y - half) / c) * c];
    let side = config.cells_per_side();
    let mut counts = vec![0u32; side * side];
    let mut stats = BuildStats::default();
    for p in &cloud.points {
        match cell_index_of(origin, c, side, *p) {
            Some((ix, iy)) => {
                counts[iy * side + ix] += 1;
                stats.accepted += 1;
            }
            None => stats.dropped += 1,
        }
    }
    let n_sat = f64::from(config.saturation_count);
    let mut occupied = Vec::new();
    let cells = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            if n == 0 {
                0.0
            } else {
                occupied.push(i);
                (f64::from(n) / n_sat).min(1.0)
            }
        })
        .collect();
    Ok(OccupancyGrid { frame: cloud.frame, config: *config, origin, side, cells, occupied, stats })
}

fn cell_index_of(origin: [f64; 2], c: f64, side: usize, p: [f64; 2]) -> Option<(usize, usize)> {
    let fx = libm::floor((p[0] - origin[0]) / c);
    let fy = libm::floor((p[1] - origin[1]) / c);
    if !(fx >= 0.0 && fy >= 0.0) {
        return None;
    }
    let (ix, iy) = (fx as usize, fy as usize);
    (ix < side && iy < side).then_some((ix, iy))
}

impl OccupancyGrid {
    /// Frame of the sweep the grid was built from.
    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Grid parameters.
    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    /// World coordinates of the minimum corner.
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    /// Cells per side.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Point accounting of the build.
    pub fn stats(&self) -> BuildStats {
        self.stats
    }

    /// Cell containing `p`, if inside the extent.
    pub fn cell_index(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        cell_index_of(self.origin, self.config.cell_size, self.side, p)
    }

    /// Probability of cell `(ix, iy)`.
    ///
    /// # Panics
    /// If the index is outside the grid.
    pub fn probability(&self, ix: usize, iy: usize) -> f64 {
        assert!(ix < self.side && iy < self.side, "cell ({ix}, {iy}) outside grid");
        self.cells[iy * self.side + ix]
    }

    /// Occupancy probability at a world position; 0 outside the grid.
    pub fn occupancy_at(&self, p: [f64; 2]) -> f64 {
        self.cell_index(p).map_or(0.0, |(ix, iy)| self.cells[iy * self.side + ix])
    }

    /// Cell bounds `(min, max)`.
    pub fn cell_bounds(&self, ix: usize, iy: usize) -> ([f64; 2], [f64; 2]) {
        let c = self.config.cell_size;
        let min = [self.origin[0] + ix as f64 * c, self.origin[1] + iy as f64 * c];
        (min, [min[0] + c, min[1] + c])
    }

    /// Cell center.
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        let c = self.config.cell_size;
        [self.origin[0] + (ix as f64 + 0.5) * c, self.origin[1] + (iy as f64 + 0.5) * c]
    }

    /// Cells with nonzero probability, row-major.
    pub fn occupied_cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        self.occupied.iter().map(move |&i| self.cell_at(i))
    }

    /// All cells, row-major.
    pub fn cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        (0..self.cells.len()).map(move |i| self.cell_at(i))
    }

    fn cell_at(&self, i: usize) -> GridCell {
        let (ix, iy) = (i % self.side, i / self.side);
        GridCell { ix, iy, center: self.cell_center(ix, iy), p: self.cells[i] }
    }

    /// Calls `f` for every cell covered by `region`, row-major.
    ///
    /// A cell is covered when its square and the region share a set of
    /// positive area.
    pub fn for_each_cell_in_region(&self, region: &OrientedRegion, mut f: impl FnMut(GridCell)) {
        let Some((x0, x1, y0, y1)) = self.index_range(region) else {
            return;
        };
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let (min, max) = self.cell_bounds(ix, iy);
                if region.overlaps_rect(min, max) {
                    f(self.cell_at(iy * self.side + ix));
                }
            }
        }
    }

    /// Cells covered by `region`, row-major.
    pub fn cells_in_region(&self, region: &OrientedRegion) -> Vec<GridCell> {
        let mut out = Vec::new();
        self.for_each_cell_in_region(region, |cell| out.push(cell));
        out
    }

    fn index_range(&self, region: &OrientedRegion) -> Option<(usize, usize, usize, usize)> {
        let (min, max) = region.aabb();
        if !(min[0].is_finite() && min[1].is_finite() && max[0].is_finite() && max[1].is_finite()) {
            return None;
        }
        let c = self.config.cell_size;
        let n = self.side as f64;
        let lo = |v: f64, o: f64| libm::floor((v - o) / c).max(0.0);
        let hi = |v: f64, o: f64| libm::floor((v - o) / c).min(n - 1.0);
        let (x0, x1) = (lo(min[0], self.origin[0]), hi(max[0], self.origin[0]));
        let (y0, y1) = (lo(min[1], self.origin[1]), hi(max[1], self.origin[1]));
        if x0 > x1 || y0 > y1 {
            return None;
        }
        Some((x0 as usize, x1 as usize, y0 as usize, y1 as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ego0() -> EgoPose {
        EgoPose::default()
    }

    fn cloud(points: Vec<[f64; 2]>) -> PointCloud2D {
        PointCloud2D { frame: 0, points }
    }

    #[test]
    fn empty_cloud_gives_empty_grid() {
        let g = build_grid(&cloud(vec![]), &ego0(), &GridConfig::default()).unwrap();
        assert_eq!(g.side(), 200);
        assert!(g.cells().all(|c| c.p == 0.0));
        assert_eq!(g.occupied_cells().count(), 0);
    }

    #[test]
    fn single_point_lands_in_expected_cell() {
        let g = build_grid(&cloud(vec![[10.2, 3.7]]), &ego0(), &GridConfig::default()).unwrap();
        assert_eq!(g.cell_index([10.2, 3.7]), Some((120, 107)));
        assert!((g.probability(120, 107) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.occupied_cells().count(), 1);
        assert!((g.occupancy_at([10.3, 3.9]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.occupancy_at([10.6, 3.7]), 0.0);
    }

    #[test]
    fn three_points_saturate() {
        let g = build_grid(&cloud(vec![[1.1, 1.1], [1.2, 1.3], [1.4, 1.0]]), &ego0(), &GridConfig::default()).unwrap();
        assert_eq!(g.occupancy_at([1.25, 1.25]), 1.0);
    }

    #[test]
    fn outside_points_are_dropped() {
        let g = build_grid(&cloud(vec![[60.0, 0.0], [0.0, -50.5], [50.0, 0.0], [0.0, 0.0]]), &ego0(), &GridConfig::default())
            .unwrap();
        // 50.0 is the open upper bound
        assert_eq!(g.stats(), BuildStats { accepted: 1, dropped: 3 });
        assert_eq!(g.occupancy_at([60.0, 0.0]), 0.0);
        assert_eq!(g.occupancy_at([-1000.0, 0.0]), 0.0);
    }

    #[test]
    fn cell_corner_belongs_to_cell_it_starts() {
        let g = build_grid(&cloud(vec![[1.0, 1.0]]), &ego0(), &GridConfig::default()).unwrap();
        let (ix, iy) = g.cell_index([1.0, 1.0]).unwrap();
        let (min, _) = g.cell_bounds(ix, iy);
        assert_eq!(min, [1.0, 1.0]);
    }

    #[test]
    fn origin_snaps_to_lattice() {
        let ego = EgoPose { x: 0.3, y: -0.2, ..EgoPose::default() };
        let g = build_grid(&cloud(vec![]), &ego, &GridConfig::default()).unwrap();
        assert_eq!(g.origin(), [-50.0, -50.5]);
    }

    #[test]
    fn region_queries() {
        let g = build_grid(&cloud(vec![]), &ego0(), &GridConfig::default()).unwrap();
        let aligned = OrientedRegion::new([2.5, 2.5], 0.5, 0.5, 0.0);
        let cells = g.cells_in_region(&aligned);
        assert_eq!(cells.len(), 4);
        assert!(cells.windows(2).all(|w| (w[0].iy, w[0].ix) < (w[1].iy, w[1].ix)));
        let far = OrientedRegion::new([200.0, 0.0], 1.0, 1.0, 0.3);
        assert!(g.cells_in_region(&far).is_empty());
        let flat = OrientedRegion::new([2.25, 2.25], 0.0, 0.0, 0.0);
        assert!(g.cells_in_region(&flat).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(GridConfig::default().validate().is_ok());
        assert!(GridConfig { cell_size: 0.3, ..Default::default() }.validate().is_err());
        assert!(GridConfig { cell_size: 0.2, ..Default::default() }.validate().is_ok());
        assert!(GridConfig { saturation_count: 0, ..Default::default() }.validate().is_err());
        assert!(GridConfig { extent: -1.0, ..Default::default() }.validate().is_err());
        let err = build_grid(&PointCloud2D::empty(3), &ego0(), &GridConfig::default()).unwrap_err();
        assert!(matches!(err, Error::FrameMismatch(_)));
    }

    fn point_strategy() -> impl Strategy<Value = Vec<[f64; 2]>> {
        proptest::collection::vec((-6.0f64..6.0, -6.0f64..6.0).prop_map(|(x, y)| [x, y]), 0..400)
    }

    proptest! {
        #[test]
        fn saturation_matches_brute_force_count(points in point_strategy()) {
            let cfg = GridConfig { extent: 10.0, cell_size: 0.5, saturation_count: 3 };
            let g = build_grid(&cloud(points.clone()), &ego0(), &cfg).unwrap();
            for cell in g.cells() {
                let (min, max) = g.cell_bounds(cell.ix, cell.iy);
                let n = points.iter().filter(|p| p[0] >= min[0] && p[0] < max[0] && p[1] >= min[1] && p[1] < max[1]).count();
                prop_assert_eq!(cell.p, (n as f64 / 3.0).min(1.0));
            }
        }

        #[test]
        fn permutation_invariant_and_monotone(points in point_strategy(), extra in point_strategy()) {
            let cfg = GridConfig { extent: 10.0, cell_size: 0.5, saturation_count: 3 };
            let g = build_grid(&cloud(points.clone()), &ego0(), &cfg).unwrap();
            let mut rev = points.clone();
            rev.reverse();
            prop_assert_eq!(&g, &build_grid(&cloud(rev), &ego0(), &cfg).unwrap());
            let mut more = points;
            more.extend(extra);
            let g2 = build_grid(&cloud(more), &ego0(), &cfg).unwrap();
            prop_assert!(g.cells().zip(g2.cells()).all(|(a, b)| b.p >= a.p));
        }
    }
}
