//! Parallel-beam scan geometry and angle-index sets.

use alloc::vec::Vec;

use crate::error::{config, Error, Result};

/// Parallel-beam scan description.
///
/// Pixel and detector positions are centred on the rotation axis. The angle of
/// index `i` is exactly `i * alpha_max / num_angles` degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub image_h: usize,
    pub image_w: usize,
    pub pixel_size: f64,
    pub num_detectors: usize,
    pub detector_spacing: f64,
    pub num_angles: usize,
    /// Angular span in degrees, in `(0, 360]`.
    pub alpha_max: f64,
}

impl Geometry {
    /// Square or rectangular geometry with unit pixels, unit detector spacing
    /// and the smallest odd detector count covering the image diagonal.
    pub fn new(image_h: usize, image_w: usize, num_angles: usize, alpha_max: f64) -> Result<Self> {
        let diag = libm::sqrt((image_h * image_h + image_w * image_w) as f64);
        let mut d = libm::ceil(diag - 1e-9) as usize;
        if d % 2 == 0 {
            d += 1;
        }
        Self::with_detectors(image_h, image_w, d, num_angles, alpha_max)
    }

    pub fn with_detectors(
        image_h: usize,
        image_w: usize,
        num_detectors: usize,
        num_angles: usize,
        alpha_max: f64,
    ) -> Result<Self> {
        let g = Geometry {
            image_h,
            image_w,
            pixel_size: 1.0,
            num_detectors,
            detector_spacing: 1.0,
            num_angles,
            alpha_max,
        };
        g.validate()?;
        Ok(g)
    }

    /// Rescales pixel and detector pitch together, keeping the detector array
    /// matched to the image grid.
    pub fn scaled(mut self, pixel_size: f64) -> Result<Self> {
        self.pixel_size = pixel_size;
        self.detector_spacing = pixel_size;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_h == 0 || self.image_w == 0 {
            return Err(config("image dimensions must be >= 1"));
        }
        if self.num_detectors == 0 || self.num_angles == 0 {
            return Err(config("detector and angle counts must be >= 1"));
        }
        if !(self.alpha_max > 0.0 && self.alpha_max <= 360.0) {
            return Err(config("alpha_max must lie in (0, 360]"));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite())
            || !(self.detector_spacing > 0.0 && self.detector_spacing.is_finite())
        {
            return Err(config("pixel size and detector spacing must be positive"));
        }
        Ok(())
    }

    pub fn num_pixels(&self) -> usize {
        self.image_h * self.image_w
    }

    /// Angular step between consecutive candidate angles, in degrees.
    pub fn angle_step(&self) -> f64 {
        self.alpha_max / self.num_angles as f64
    }

    pub fn angle_deg(&self, index: usize) -> f64 {
        index as f64 * self.alpha_max / self.num_angles as f64
    }

    pub fn angle_rad(&self, index: usize) -> f64 {
        self.angle_deg(index) * core::f64::consts::PI / 180.0
    }

    pub fn check_angle(&self, index: usize) -> Result<()> {
        if index >= self.num_angles {
            Err(Error::Bounds {
                index,
                limit: self.num_angles,
            })
        } else {
            Ok(())
        }
    }

    /// Detector coordinate of bin `d`.
    pub fn detector_u(&self, d: usize) -> f64 {
        (d as f64 - (self.num_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    pub fn all_angles(&self) -> AngleSet {
        AngleSet {
            indices: (0..self.num_angles).collect(),
        }
    }
}

/// Wrap-around angular distance on the `alpha_max` circle, in degrees.
pub fn angular_distance(i: usize, j: usize, geom: &Geometry) -> Result<f64> {
    geom.check_angle(i)?;
    geom.check_angle(j)?;
    let d = libm::fabs(geom.angle_deg(i) - geom.angle_deg(j));
    Ok(d.min(geom.alpha_max - d))
}

/// Sorted set of distinct angle indices; the discrete form of a row-selection
/// operator on the full sinogram.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct AngleSet {
    indices: Vec<usize>,
}

impl AngleSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a set, rejecting duplicates and indices `>= num_angles`.
    pub fn new(mut indices: Vec<usize>, num_angles: usize) -> Result<Self> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(config("duplicate angle index"));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= num_angles {
                return Err(Error::Bounds {
                    index: last,
                    limit: num_angles,
                });
            }
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Inserts an index; returns false if it was already present.
    pub fn insert(&mut self, index: usize) -> bool {
        match self.indices.binary_search(&index) {
            Ok(_) => false,
            Err(pos) => {
                self.indices.insert(pos, index);
                true
            }
        }
    }

    pub fn union(&self, other: &AngleSet) -> AngleSet {
        let mut out = self.clone();
        for &i in other.indices() {
            out.insert(i);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }
}
