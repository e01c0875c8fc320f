//! Ray-driven parallel-beam projector with linear interpolation (Joseph's
//! method) and its exact adjoint.
//!
//! For each ray the dominant axis is stepped one pixel at a time; at every
//! step the image is linearly interpolated along the other axis, with zero
//! outside the grid, and the sum is weighted by the path length per step
//! `pixel_size / |cos|` (or `/ |sin|`). Rows are stepped when
//! `|cos theta| >= |sin theta|`, columns otherwise.
//!
//! The interpolant is averaged over the footprint of the detector bin on the
//! stepped row (width `detector_spacing / |cos|`) rather than sampled at the
//! ray centre. Every pixel then contributes the same total `pixel_size^2 /
//! detector_spacing` to each full projection, so row sums agree across
//! angles; as the bin width shrinks this turns into plain point sampling.
//!
//! Ray `u` at angle `theta` is the line `{u*e + t*d}` with
//! `e = (cos, sin)`, `d = (-sin, cos)`, `x` to the right and `y` up.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{AngleSet, Geometry};
use crate::image::Image;
use crate::sinogram::Sinogram;

/// Per-angle constants shared by the forward and adjoint passes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RayFrame {
    sin: f64,
    cos: f64,
    step_rows: bool,
}

impl RayFrame {
    pub(crate) fn new(geom: &Geometry, angle: usize) -> Self {
        let theta = geom.angle_rad(angle);
        let (sin, cos) = (libm::sin(theta), libm::cos(theta));
        Self {
            sin,
            cos,
            step_rows: libm::fabs(cos) >= libm::fabs(sin),
        }
    }
}

/// Integral of the unit hat function `max(0, 1 - |s|)` from minus infinity.
#[inline]
fn hat_cdf(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s <= 0.0 {
        0.5 * (s + 1.0) * (s + 1.0)
    } else if s < 1.0 {
        1.0 - 0.5 * (1.0 - s) * (1.0 - s)
    } else {
        1.0
    }
}

/// Calls `f(k, weight)` for every grid index `k < n` whose hat overlaps the
/// window `center +- half` (in grid units); the weight is the hat averaged
/// over the window.
#[inline]
fn window_weights(center: f64, half: f64, n: usize, scale: f64, mut f: impl FnMut(usize, f64)) {
    let lo = libm::ceil(center - half - 1.0).max(0.0);
    let hi = libm::floor(center + half + 1.0).min(n as f64 - 1.0);
    if hi < lo {
        return;
    }
    let norm = scale / (2.0 * half);
    for k in lo as usize..=hi as usize {
        let off = center - k as f64;
        let wgt = hat_cdf(off + half) - hat_cdf(off - half);
        if wgt > 0.0 {
            f(k, norm * wgt);
        }
    }
}

/// Visits the interpolation weights of one ray as `(pixel_index, weight)`.
#[inline]
fn for_each_weight(geom: &Geometry, frame: &RayFrame, u: f64, mut f: impl FnMut(usize, f64)) {
    let (h, w) = (geom.image_h, geom.image_w);
    let ps = geom.pixel_size;
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    if frame.step_rows {
        let scale = ps / libm::fabs(frame.cos);
        let half = 0.5 * geom.detector_spacing / (ps * libm::fabs(frame.cos));
        for r in 0..h {
            let y = (cy - r as f64) * ps;
            let x = (u - frame.sin * y) / frame.cos;
            window_weights(x / ps + cx, half, w, scale, |c, wgt| f(r * w + c, wgt));
        }
    } else {
        let scale = ps / libm::fabs(frame.sin);
        let half = 0.5 * geom.detector_spacing / (ps * libm::fabs(frame.sin));
        for c in 0..w {
            let x = (c as f64 - cx) * ps;
            let y = (u - frame.cos * x) / frame.sin;
            window_weights(cy - y / ps, half, h, scale, |r, wgt| f(r * w + c, wgt));
        }
    }
}

fn check_image(image: &Image, geom: &Geometry) -> Result<()> {
    if image.dims() != (geom.image_h, geom.image_w) {
        return Err(Error::Shape {
            expected: (geom.image_h, geom.image_w),
            actual: image.dims(),
        });
    }
    Ok(())
}

pub(crate) fn project_into(data: &[f64], geom: &Geometry, angle: usize, out: &mut [f64]) {
    let frame = RayFrame::new(geom, angle);
    for (d, o) in out.iter_mut().enumerate() {
        let u = geom.detector_u(d);
        let mut acc = 0.0;
        for_each_weight(geom, &frame, u, |p, wgt| acc += wgt * data[p]);
        *o = acc;
    }
}

pub(crate) fn backproject_into(row: &[f64], geom: &Geometry, angle: usize, out: &mut [f64]) {
    let frame = RayFrame::new(geom, angle);
    for (d, &v) in row.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let u = geom.detector_u(d);
        for_each_weight(geom, &frame, u, |p, wgt| out[p] += wgt * v);
    }
}

/// Sparse weights of every ray of one angle, for solvers that apply the same
/// rows many times.
#[derive(Debug, Clone)]
pub(crate) struct AngleMatrix {
    /// `offsets[d]..offsets[d + 1]` indexes the entries of ray `d`.
    offsets: Vec<u32>,
    pixels: Vec<u32>,
    weights: Vec<f64>,
}

impl AngleMatrix {
    pub(crate) fn new(geom: &Geometry, angle: usize) -> Self {
        let frame = RayFrame::new(geom, angle);
        let mut offsets = Vec::with_capacity(geom.num_detectors + 1);
        let mut pixels = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for d in 0..geom.num_detectors {
            for_each_weight(geom, &frame, geom.detector_u(d), |p, w| {
                pixels.push(p as u32);
                weights.push(w);
            });
            offsets.push(pixels.len() as u32);
        }
        Self {
            offsets,
            pixels,
            weights,
        }
    }

    /// Same result as [`project_into`], summed in the same order.
    pub(crate) fn project(&self, data: &[f64], out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.offsets[d] as usize, self.offsets[d + 1] as usize);
            let mut acc = 0.0;
            for (&p, &w) in self.pixels[a..b].iter().zip(&self.weights[a..b]) {
                acc += w * data[p as usize];
            }
            *o = acc;
        }
    }

    /// Same result as [`backproject_into`].
    pub(crate) fn backproject(&self, row: &[f64], out: &mut [f64]) {
        for (d, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let (a, b) = (self.offsets[d] as usize, self.offsets[d + 1] as usize);
            for (&p, &w) in self.pixels[a..b].iter().zip(&self.weights[a..b]) {
                out[p as usize] += w * v;
            }
        }
    }
}

/// Line integrals along the `D` parallel rays of one angle.
pub fn project_at_angle(image: &Image, geom: &Geometry, angle_index: usize) -> Result<Vec<f64>> {
    check_image(image, geom)?;
    geom.check_angle(angle_index)?;
    let mut out = vec![0.0; geom.num_detectors];
    project_into(image.data(), geom, angle_index, &mut out);
    Ok(out)
}

/// One row per requested angle.
pub fn forward_project(image: &Image, geom: &Geometry, angles: &AngleSet) -> Result<Sinogram> {
    check_image(image, geom)?;
    let mut sino = Sinogram::empty(*geom);
    for a in angles.iter() {
        geom.check_angle(a)?;
        let mut row = vec![0.0; geom.num_detectors];
        project_into(image.data(), geom, a, &mut row);
        sino.insert_row(a, row)?;
    }
    Ok(sino)
}

/// Projection at every candidate angle, as plain rows indexed by angle.
pub fn forward_project_all(image: &Image, geom: &Geometry) -> Result<Vec<Vec<f64>>> {
    check_image(image, geom)?;
    Ok((0..geom.num_angles)
        .map(|a| {
            let mut row = vec![0.0; geom.num_detectors];
            project_into(image.data(), geom, a, &mut row);
            row
        })
        .collect())
}

/// Adjoint of [`forward_project`] restricted to the rows present in `sino`.
pub fn backproject(sino: &Sinogram, geom: &Geometry) -> Result<Image> {
    sino.check_geometry(geom)?;
    let mut out = Image::zeros(geom.image_h, geom.image_w);
    for (a, row) in sino.rows() {
        backproject_into(row, geom, a, out.data_mut());
    }
    Ok(out)
}
