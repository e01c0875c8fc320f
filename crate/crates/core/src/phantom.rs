//! Ellipse phantoms and region-of-interest masks.
//!
//! Phantom coordinates span `[-1, 1]` on both axes with `x` to the right and
//! `y` up; pixel centres are sampled at `((2c + 1) / w - 1, 1 - (2r + 1) / h)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_a: f64,
    pub semi_b: f64,
    /// Counter-clockwise rotation in degrees.
    pub rotation: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn new(center_x: f64, center_y: f64, semi_a: f64, semi_b: f64, rotation: f64, intensity: f64) -> Self {
        Self {
            center_x,
            center_y,
            semi_a,
            semi_b,
            rotation,
            intensity,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let phi = self.rotation.to_radians();
        let (s, c) = (libm::sin(phi), libm::cos(phi));
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let xr = dx * c + dy * s;
        let yr = -dx * s + dy * c;
        (xr / self.semi_a) * (xr / self.semi_a) + (yr / self.semi_b) * (yr / self.semi_b) <= 1.0
    }

    fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (-1.0..=1.0).contains(&v);
        let axis = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.center_x) || !in_unit(self.center_y) {
            return Err(config("ellipse centre must lie in [-1, 1]"));
        }
        if !axis(self.semi_a) || !axis(self.semi_b) {
            return Err(config("ellipse semi-axes must lie in (0, 1]"));
        }
        if !self.rotation.is_finite() || !self.intensity.is_finite() {
            return Err(config("ellipse rotation and intensity must be finite"));
        }
        Ok(())
    }
}

/// Additive superposition of ellipses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EllipsePhantom {
    pub ellipses: Vec<Ellipse>,
}

impl EllipsePhantom {
    pub fn new(ellipses: Vec<Ellipse>) -> Self {
        Self { ellipses }
    }

    /// The ten-ellipse Shepp-Logan head with the higher-contrast intensities
    /// used by most toolkits (outer skull 1.0, brain 0.2).
    pub fn shepp_logan() -> Self {
        #[rustfmt::skip]
        const TABLE: [[f64; 6]; 10] = [
            // intensity, a, b, x0, y0, rotation
            [ 1.0, 0.69,   0.92,    0.0,   0.0,     0.0],
            [-0.8, 0.6624, 0.8740,  0.0,  -0.0184,  0.0],
            [-0.2, 0.1100, 0.3100,  0.22,  0.0,   -18.0],
            [-0.2, 0.1600, 0.4100, -0.22,  0.0,    18.0],
            [ 0.1, 0.2100, 0.2500,  0.0,   0.35,    0.0],
            [ 0.1, 0.0460, 0.0460,  0.0,   0.1,     0.0],
            [ 0.1, 0.0460, 0.0460,  0.0,  -0.1,     0.0],
            [ 0.1, 0.0460, 0.0230, -0.08, -0.605,   0.0],
            [ 0.1, 0.0230, 0.0230,  0.0,  -0.606,   0.0],
            [ 0.1, 0.0230, 0.0460,  0.06, -0.605,   0.0],
        ];
        Self {
            ellipses: TABLE
                .iter()
                .map(|t| Ellipse::new(t[3], t[4], t[1], t[2], t[5], t[0]))
                .collect(),
        }
    }

    /// Scales about the origin, rotates counter-clockwise and then shifts
    /// every ellipse. Centres are clamped to the unit square.
    pub fn transformed(&self, scale: f64, rotation_deg: f64, dx: f64, dy: f64) -> Self {
        let phi = rotation_deg.to_radians();
        let (s, c) = (libm::sin(phi), libm::cos(phi));
        Self {
            ellipses: self
                .ellipses
                .iter()
                .map(|e| {
                    let x = e.center_x * scale;
                    let y = e.center_y * scale;
                    Ellipse {
                        center_x: (x * c - y * s + dx).clamp(-1.0, 1.0),
                        center_y: (x * s + y * c + dy).clamp(-1.0, 1.0),
                        semi_a: (e.semi_a * scale).min(1.0),
                        semi_b: (e.semi_b * scale).min(1.0),
                        rotation: e.rotation + rotation_deg,
                        intensity: e.intensity,
                    }
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ellipses.iter().try_for_each(Ellipse::validate)
    }
}

#[inline]
pub fn pixel_center(r: usize, c: usize, h: usize, w: usize) -> (f64, f64) {
    (
        (2 * c + 1) as f64 / w as f64 - 1.0,
        1.0 - (2 * r + 1) as f64 / h as f64,
    )
}

/// Each pixel is the summed intensity of the ellipses containing its centre,
/// clamped to be non-negative.
pub fn render_phantom(spec: &EllipsePhantom, h: usize, w: usize) -> Result<Image> {
    if h < 8 || w < 8 {
        return Err(config("phantom size must be at least 8x8"));
    }
    spec.validate()?;
    let mut img = Image::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let (x, y) = pixel_center(r, c, h, w);
            let v: f64 = spec
                .ellipses
                .iter()
                .filter(|e| e.contains(x, y))
                .map(|e| e.intensity)
                .sum();
            img.set(r, c, v.max(0.0));
        }
    }
    Ok(img)
}

/// Min-max rescale onto `[0, 1]`; a constant image maps to zeros.
pub fn rescale_unit(img: &Image) -> Image {
    let (lo, hi) = img.min_max();
    img.normalized_by(lo, hi)
}

/// Shepp-Logan head rendered at `h x w` and rescaled to `[0, 1]`.
pub fn shepp_logan(h: usize, w: usize) -> Result<Image> {
    Ok(rescale_unit(&render_phantom(&EllipsePhantom::shepp_logan(), h, w)?))
}

/// Deterministic Shepp-Logan variants: mild scale, rotation and shift.
pub fn shepp_logan_family(count: usize) -> Vec<EllipsePhantom> {
    let base = EllipsePhantom::shepp_logan();
    (0..count)
        .map(|k| {
            let t = k as f64;
            let scale = 0.92 + 0.02 * ((k * 3) % 5) as f64;
            let rot = -20.0 + 11.0 * t;
            let dx = 0.03 * (((k * 7) % 5) as f64 - 2.0);
            let dy = 0.02 * (((k * 2) % 5) as f64 - 2.0);
            base.transformed(scale, rot, dx, dy)
        })
        .collect()
}

/// Body-like phantoms with a cluster of small, high-contrast features placed
/// away from the centre (the analogue of a spine in an axial slice).
pub fn off_center_suite(count: usize) -> Vec<EllipsePhantom> {
    (0..count)
        .map(|k| {
            let t = k as f64;
            let dir = (35.0 + 67.0 * t).to_radians();
            let radius = 0.42 + 0.03 * (k % 3) as f64;
            let (fx, fy) = (radius * libm::cos(dir), radius * libm::sin(dir));
            let mut ellipses = vec![
                Ellipse::new(0.0, 0.0, 0.78, 0.62, 8.0 * t, 0.25),
                Ellipse::new(-fx * 0.6, -fy * 0.6, 0.18, 0.12, 30.0 * t, 0.1),
                // feature cluster
                Ellipse::new(fx, fy, 0.11, 0.08, 20.0 * t, 0.45),
            ];
            for j in 0..3 {
                let off = (j as f64 - 1.0) * 0.09;
                let (px, py) = (-libm::sin(dir) * off, libm::cos(dir) * off);
                ellipses.push(Ellipse::new(
                    (fx + px * 1.6).clamp(-1.0, 1.0),
                    (fy + py * 1.6).clamp(-1.0, 1.0),
                    0.035,
                    0.025,
                    45.0 * j as f64,
                    0.3,
                ));
            }
            EllipsePhantom::new(ellipses)
        })
        .collect()
}

/// Centre of the high-contrast feature cluster of `off_center_suite(..)[k]`.
pub fn off_center_feature(k: usize) -> (f64, f64) {
    let dir = (35.0 + 67.0 * k as f64).to_radians();
    let radius = 0.42 + 0.03 * (k % 3) as f64;
    (radius * libm::cos(dir), radius * libm::sin(dir))
}

/// Binary mask marking clinically important pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl RoiMask {
    pub fn from_vec(h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != h * w {
            return Err(config("mask length does not match h*w"));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(config("mask values must be 0 or 1"));
        }
        Ok(Self { h, w, data })
    }

    pub fn full(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![1; h * w],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.w + c] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Inclusive `(r0, r1, c0, c1)` bounding box of the marked pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.h {
            for c in 0..self.w {
                if self.get(r, c) {
                    bb = Some(match bb {
                        None => (r, r, c, c),
                        Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                    });
                }
            }
        }
        bb
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoiSpec {
    /// Pixels whose centre lies inside the ellipse.
    Ellipse(Ellipse),
    /// Pixels with value `>= tau`.
    Threshold(f64),
}

/// Builds a mask paired with `image`. An empty mask is returned with a
/// logged warning.
pub fn make_roi_mask(spec: &RoiSpec, image: &Image) -> Result<RoiMask> {
    let (h, w) = image.dims();
    let mut data = vec![0u8; h * w];
    match spec {
        RoiSpec::Ellipse(e) => {
            if !(e.semi_a > 0.0 && e.semi_b > 0.0) {
                return Err(config("RoI ellipse semi-axes must be positive"));
            }
            for r in 0..h {
                for c in 0..w {
                    let (x, y) = pixel_center(r, c, h, w);
                    data[r * w + c] = e.contains(x, y) as u8;
                }
            }
        }
        RoiSpec::Threshold(tau) => {
            if !tau.is_finite() {
                return Err(config("RoI threshold must be finite"));
            }
            for (m, &v) in data.iter_mut().zip(image.data()) {
                *m = (v >= *tau) as u8;
            }
        }
    }
    let mask = RoiMask { h, w, data };
    if mask.is_empty() {
        log::warn!("region-of-interest mask is empty");
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_renders_zero() {
        let img = render_phantom(&EllipsePhantom::default(), 16, 16).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
        assert!(render_phantom(&EllipsePhantom::default(), 7, 16).is_err());
    }

    #[test]
    fn full_disk() {
        let spec = EllipsePhantom::new(vec![Ellipse::new(0.0, 0.0, 0.5, 0.5, 0.0, 1.0)]);
        let img = render_phantom(&spec, 32, 32).unwrap();
        assert_eq!(img.get(16, 16), 1.0);
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(16, 2), 0.0);
    }

    /// Independent per-pixel membership: each ellipse tested through its
    /// implicit quadratic form instead of the rotate-then-scale path.
    fn oracle_value(spec: &EllipsePhantom, x: f64, y: f64) -> f64 {
        let mut v = 0.0;
        for e in &spec.ellipses {
            let phi = e.rotation * core::f64::consts::PI / 180.0;
            let (s, c) = (libm::sin(phi), libm::cos(phi));
            let (a2, b2) = (e.semi_a * e.semi_a, e.semi_b * e.semi_b);
            let qa = c * c / a2 + s * s / b2;
            let qb = 2.0 * c * s * (1.0 / a2 - 1.0 / b2);
            let qc = s * s / a2 + c * c / b2;
            let (dx, dy) = (x - e.center_x, y - e.center_y);
            if qa * dx * dx + qb * dx * dy + qc * dy * dy <= 1.0 + 1e-12 {
                v += e.intensity;
            }
        }
        v.max(0.0)
    }

    #[test]
    fn shepp_logan_matches_membership_oracle() {
        let spec = EllipsePhantom::shepp_logan();
        let (h, w) = (64, 64);
        let img = render_phantom(&spec, h, w).unwrap();
        let mut mismatches = 0;
        for r in 0..h {
            for c in 0..w {
                let (x, y) = pixel_center(r, c, h, w);
                if (img.get(r, c) - oracle_value(&spec, x, y)).abs() > 1e-12 {
                    mismatches += 1;
                }
            }
        }
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn shepp_logan_rescaled_and_centre_value() {
        let img = shepp_logan(65, 65).unwrap();
        let (lo, hi) = img.min_max();
        assert_eq!((lo, hi), (0.0, 1.0));
        // centre (0, 0): outer 1.0 + brain -0.8 (y0=-0.0184 still contains it);
        // small ellipses at y = +-0.1 have radius 0.046 and miss it.
        let raw = oracle_value(&EllipsePhantom::shepp_logan(), 0.0, 0.0);
        let (rlo, rhi) = render_phantom(&EllipsePhantom::shepp_logan(), 65, 65).unwrap().min_max();
        let expected = (raw - rlo) / (rhi - rlo);
        assert!((img.get(32, 32) - expected).abs() < 1e-12);
        assert!((expected - 0.2).abs() < 1e-12);
    }

    #[test]
    fn resolution_independence() {
        let lo = shepp_logan(64, 64).unwrap();
        let hi = shepp_logan(256, 256).unwrap().block_average(4).unwrap();
        let mad = lo
            .data()
            .iter()
            .zip(hi.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / lo.len() as f64;
        assert!(mad < 0.02, "mean abs diff {mad}");
    }

    #[test]
    fn roi_threshold_and_empty() {
        let img = Image::filled(16, 16, 0.3);
        let m = make_roi_mask(&RoiSpec::Threshold(0.0), &img).unwrap();
        assert_eq!(m.count(), 256);
        let tiny = Ellipse::new(0.0, 0.0, 1e-4, 1e-4, 0.0, 1.0);
        // centred between the four middle pixels: covers no pixel centre
        let m = make_roi_mask(&RoiSpec::Ellipse(tiny), &img).unwrap();
        assert!(m.is_empty());
        assert!(m.bounding_box().is_none());
    }

    #[test]
    fn roi_ellipse_area_matches_formula() {
        let img = shepp_logan(256, 256).unwrap();
        let e = Ellipse::new(0.1, -0.55, 0.12, 0.2, 15.0, 1.0);
        let m = make_roi_mask(&RoiSpec::Ellipse(e), &img).unwrap();
        // area in pixels: pi*a*b scaled by (w/2)*(h/2)
        let expected = core::f64::consts::PI * 0.12 * 0.2 * 128.0 * 128.0;
        let rel = (m.count() as f64 - expected).abs() / expected;
        assert!(rel < 0.02, "rel area error {rel}");
    }

    #[test]
    fn suites_are_valid_and_distinct() {
        for p in shepp_logan_family(5).iter().chain(off_center_suite(5).iter()) {
            p.validate().unwrap();
        }
        let a = render_phantom(&off_center_suite(2)[0], 32, 32).unwrap();
        let b = render_phantom(&off_center_suite(2)[1], 32, 32).unwrap();
        assert_ne!(a, b);
    }
}
