//! Error type shared by all monitor modules.

use alloc::string::String;
use thiserror::Error;

/// Errors raised by the monitor core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two states used for a motion check are not separated by a positive interval.
    #[error("non-positive time interval {dt} s between frames")]
    ZeroInterval {
        /// The offending interval in seconds.
        dt: f64,
    },
    /// No previous state exists for the object.
    #[error("no motion history for object {object_id}")]
    MissingHistory {
        /// Object without history.
        object_id: u64,
    },
    /// Streams that must be frame-aligned disagree.
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    /// A configuration or parameter value violates its invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// An object state violates its invariants.
    #[error("invalid object state: {0}")]
    InvalidState(String),
}
