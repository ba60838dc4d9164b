//! Lightweight runtime monitor for automated-vehicle perception output.
//!
//! Two independent checks verify an object list produced by a perception stack:
//!
//! * [`sensor`] checks compare reported object footprints against a static
//!   occupancy grid built from LiDAR returns ([`grid`]), flagging objects
//!   without sensor evidence and evidence without a reported object.
//! * [`plausibility`] checks verify each object's motion between two frames
//!   against a constant turn rate and acceleration (CTRA) model with
//!   first-order error propagation.
//!
//! The [`scenario`], [`inject`] and [`eval`] modules provide a synthetic world,
//! a fault injector and a precision/recall harness for measuring what the
//! monitor detects.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command line
//! and wall-clock benchmarks live in the `permon` crate.
#![no_std]
#![warn(missing_docs)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod eval;
pub mod grid;
pub mod inject;
pub mod plausibility;
pub mod region;
pub mod rng;
pub mod scenario;
pub mod sensor;
pub mod types;

pub use error::Error;
pub use grid::{build_grid, GridConfig, OccupancyGrid};
pub use region::OrientedRegion;
pub use types::{normalize_angle, velocity_to_polar, EgoPose, InjectedError, ObjectState, PointCloud2D};

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
