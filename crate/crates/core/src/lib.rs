//! Active sinogram sampling for sparse-view parallel-beam CT.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! pipeline: the Joseph projector and its adjoint, Poisson transmission noise,
//! ellipse phantoms, the reconstructor (FBP, SART and a trainable residual
//! post-filter), the sampling agent (reliability target, per-angle scorer,
//! windowed top-k selection), the episode runners for the sampling policies,
//! the losses, Adam and the alternating training loop, and image metrics.
//!
//! File formats, the experiment harness and the command line live in the
//! `actiscan` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod agent;
pub mod clock;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod image;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod policy;
pub mod projector;
pub mod recon;
pub mod sinogram;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{angular_distance, AngleSet, Geometry};
pub use image::Image;
pub use sinogram::Sinogram;
