use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{AngleSet, Geometry};
use crate::image::Image;
use crate::noise::add_poisson_noise;
use crate::projector::forward_project;
use crate::sinogram::Sinogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Incident photons per detector bin.
    pub photons: f64,
    pub seed: u64,
}

/// The scanner as seen by a policy: every angle can be measured, and measuring
/// the same angle twice returns the identical row.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSource {
    geometry: Geometry,
    measured: Sinogram,
    clean: Sinogram,
    ground_truth: Option<Image>,
}

impl MeasurementSource {
    /// Simulates a full scan of `image`, noised once up front when requested.
    pub fn simulate(image: &Image, geom: &Geometry, noise: Option<NoiseConfig>) -> Result<Self> {
        let clean = forward_project(image, geom, &geom.all_angles())?;
        let measured = match noise {
            Some(n) => add_poisson_noise(&clean, n.photons, n.seed)?,
            None => clean.clone(),
        };
        Ok(Self {
            geometry: *geom,
            measured,
            clean,
            ground_truth: Some(image.clone()),
        })
    }

    /// Wraps an externally acquired full sinogram; no ground truth is known.
    pub fn from_sinogram(sino: Sinogram) -> Result<Self> {
        if !sino.is_full() {
            return Err(Error::Empty("sinogram rows for some angles"));
        }
        Ok(Self {
            geometry: *sino.geometry(),
            clean: sino.clone(),
            measured: sino,
            ground_truth: None,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn ground_truth(&self) -> Option<&Image> {
        self.ground_truth.as_ref()
    }

    pub fn measure(&self, angle: usize) -> Result<&[f64]> {
        self.geometry.check_angle(angle)?;
        Ok(self.measured.row(angle).expect("full sinogram"))
    }

    pub fn measure_set(&self, angles: &AngleSet) -> Result<Sinogram> {
        self.measured.subset(angles)
    }

    pub fn full(&self) -> &Sinogram {
        &self.measured
    }

    /// Noise-free rows of every angle, in angle order.
    pub fn clean_rows(&self) -> Vec<Vec<f64>> {
        self.clean.rows().map(|(_, r)| r.to_vec()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.measured
            .rows()
            .flat_map(|(_, r)| r.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
