use alloc::vec;

use crate::error::{config, Error, Result};
use crate::geometry::Geometry;
use crate::image::Image;
use crate::projector::{project_into, AngleMatrix};
use crate::sinogram::Sinogram;

/// Normalisations smaller than this are treated as empty rays / pixels.
pub const SART_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SartConfig {
    pub num_iterations: usize,
    /// Relaxation in `(0, 2)`.
    pub relaxation: f64,
    pub nonnegativity: bool,
}

impl Default for SartConfig {
    fn default() -> Self {
        Self {
            num_iterations: 20,
            relaxation: 0.5,
            nonnegativity: true,
        }
    }
}

impl SartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_iterations == 0 {
            return Err(config("SART needs at least one iteration"));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(config("SART relaxation must lie in (0, 2)"));
        }
        Ok(())
    }
}

/// `||A u - y||` over the rows present in `sino`.
pub fn data_residual(sino: &Sinogram, geom: &Geometry, image: &Image) -> Result<f64> {
    sino.check_geometry(geom)?;
    image.check_same_shape(&Image::zeros(geom.image_h, geom.image_w))?;
    let mut buf = vec![0.0; geom.num_detectors];
    let mut acc = 0.0;
    for (a, row) in sino.rows() {
        project_into(image.data(), geom, a, &mut buf);
        acc += buf.iter().zip(row).map(|(p, y)| (p - y) * (p - y)).sum::<f64>();
    }
    Ok(libm::sqrt(acc))
}

/// Simultaneous algebraic reconstruction over all present views:
/// `u <- clamp(u + lambda * A^T((y - A u) / row_sums) / col_sums)`.
pub fn sart(sino: &Sinogram, geom: &Geometry, init: &Image, cfg: &SartConfig) -> Result<Image> {
    cfg.validate()?;
    sino.check_geometry(geom)?;
    init.check_same_shape(&Image::zeros(geom.image_h, geom.image_w))?;
    let np = geom.num_pixels();
    let nd = geom.num_detectors;

    let ones = vec![1.0; np];
    let ones_row = vec![1.0; nd];
    let mut mats = alloc::vec::Vec::with_capacity(sino.num_rows());
    let mut row_sums = alloc::vec::Vec::with_capacity(sino.num_rows());
    let mut col_sums = vec![0.0; np];
    for (a, _) in sino.rows() {
        let m = AngleMatrix::new(geom, a);
        let mut rs = vec![0.0; nd];
        m.project(&ones, &mut rs);
        m.backproject(&ones_row, &mut col_sums);
        row_sums.push(rs);
        mats.push(m);
    }
    let inv = |s: f64| if s > SART_EPS { 1.0 / s } else { 0.0 };
    let inv_col: alloc::vec::Vec<f64> = col_sums.iter().map(|&s| inv(s)).collect();

    let mut u = init.clone();
    let mut proj = vec![0.0; nd];
    let mut resid = vec![0.0; nd];
    let mut update = vec![0.0; np];
    for it in 0..cfg.num_iterations {
        update.iter_mut().for_each(|v| *v = 0.0);
        for (((_, row), rs), m) in sino.rows().zip(&row_sums).zip(&mats) {
            m.project(u.data(), &mut proj);
            for d in 0..nd {
                resid[d] = (row[d] - proj[d]) * inv(rs[d]);
            }
            m.backproject(&resid, &mut update);
        }
        for ((v, du), ic) in u.data_mut().iter_mut().zip(&update).zip(&inv_col) {
            *v += cfg.relaxation * du * ic;
            if cfg.nonnegativity && *v < 0.0 {
                *v = 0.0;
            }
        }
        if u.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                iteration: it,
                what: "non-finite value in SART update",
            });
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AngleSet;
    use crate::phantom::{off_center_suite, render_phantom, shepp_logan};
    use crate::projector::forward_project;
    use alloc::vec::Vec;

    fn uniform(k: usize, t: usize) -> AngleSet {
        AngleSet::new((0..k).map(|j| j * t / k).collect(), t).unwrap()
    }

    #[test]
    fn converges_on_consistent_data() {
        let g = Geometry::new(32, 32, 60, 180.0).unwrap();
        let gt = shepp_logan(32, 32).unwrap();
        let y = forward_project(&gt, &g, &uniform(20, 60)).unwrap();
        let init = Image::zeros(32, 32);
        let r0 = data_residual(&y, &g, &init).unwrap();
        let cfg = SartConfig {
            num_iterations: 50,
            ..SartConfig::default()
        };
        let u = sart(&y, &g, &init, &cfg).unwrap();
        let r1 = data_residual(&y, &g, &u).unwrap();
        assert!(r1 < 0.1 * r0, "{r1} vs {r0}");
    }

    #[test]
    fn zero_in_zero_out() {
        let g = Geometry::new(16, 16, 12, 180.0).unwrap();
        let y = forward_project(&Image::zeros(16, 16), &g, &uniform(6, 12)).unwrap();
        let u = sart(&y, &g, &Image::zeros(16, 16), &SartConfig::default()).unwrap();
        assert!(u.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_not_increased_on_test_phantoms() {
        let g = Geometry::new(32, 32, 90, 180.0).unwrap();
        let mut suite: Vec<Image> = off_center_suite(3)
            .iter()
            .map(|p| render_phantom(p, 32, 32).unwrap())
            .collect();
        suite.push(shepp_logan(32, 32).unwrap());
        for gt in &suite {
            for k in [5, 15, 45] {
                let y = forward_project(gt, &g, &uniform(k, 90)).unwrap();
                let init = Image::zeros(32, 32);
                let u = sart(&y, &g, &init, &SartConfig::default()).unwrap();
                assert!(data_residual(&y, &g, &u).unwrap() <= data_residual(&y, &g, &init).unwrap());
            }
        }
    }

    #[test]
    fn config_validation() {
        let g = Geometry::new(8, 8, 4, 180.0).unwrap();
        let y = Sinogram::empty(g);
        let bad = SartConfig {
            relaxation: 2.0,
            ..SartConfig::default()
        };
        assert!(sart(&y, &g, &Image::zeros(8, 8), &bad).is_err());
        let bad = SartConfig {
            num_iterations: 0,
            ..SartConfig::default()
        };
        assert!(sart(&y, &g, &Image::zeros(8, 8), &bad).is_err());
        assert!(sart(&y, &g, &Image::zeros(8, 9), &SartConfig::default()).is_err());
    }
}
