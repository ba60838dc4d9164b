//! Command-line pipeline around `permon-core`: file formats, run
//! configuration, the latency benchmark and the `permon` binary's subcommands.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;

pub use error::{Error, Result};
