//! The reconstructor: filtered backprojection, SART refinement warm-started
//! from it, and a trainable residual post-filter on top.

pub mod fbp;
pub mod postfilter;
pub mod sart;

pub use fbp::{fbp, RampFilter};
pub use postfilter::PostFilterModel;
pub use sart::{data_residual, sart, SartConfig};

use crate::error::Result;
use crate::geometry::Geometry;
use crate::image::Image;
use crate::sinogram::Sinogram;

/// The composite reconstruction operator used by every policy and by
/// training: `post_filter(SART(y, init = FBP(y)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstructor {
    pub filter: RampFilter,
    pub sart: SartConfig,
    pub model: PostFilterModel,
}

impl Default for Reconstructor {
    fn default() -> Self {
        Self {
            filter: RampFilter::Ramp,
            sart: SartConfig::default(),
            model: PostFilterModel::default_architecture(),
        }
    }
}

impl Reconstructor {
    pub fn with_model(model: PostFilterModel) -> Self {
        Self {
            model,
            ..Self::default()
        }
    }

    /// FBP followed by SART; the input of the post-filter.
    pub fn classical(&self, sino: &Sinogram, geom: &Geometry) -> Result<Image> {
        let init = fbp(sino, geom, self.filter)?;
        sart(sino, geom, &init, &self.sart)
    }

    pub fn reconstruct(&self, sino: &Sinogram, geom: &Geometry) -> Result<Image> {
        Ok(self.model.forward(&self.classical(sino, geom)?))
    }
}

/// Free-function form of [`Reconstructor::reconstruct`].
pub fn reconstruct(
    sino: &Sinogram,
    geom: &Geometry,
    model: &PostFilterModel,
    cfg: &SartConfig,
) -> Result<Image> {
    let r = Reconstructor {
        filter: RampFilter::Ramp,
        sart: *cfg,
        model: model.clone(),
    };
    r.reconstruct(sino, geom)
}
