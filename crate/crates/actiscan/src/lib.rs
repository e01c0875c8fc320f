//! Host-side companion of `actiscan-core`: file formats, experiment
//! configuration, the parallel experiment runner and a wall clock.
//!
//! The `actiscan` binary in this crate exposes everything on the command line.

pub mod clock;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;

pub use error::{Error, Result};
