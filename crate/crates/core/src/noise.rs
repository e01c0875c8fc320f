//! Poisson transmission noise on line integrals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{config, Result};
use crate::sinogram::Sinogram;

/// Photon count of the L1 noise level.
pub const PHOTONS_L1: f64 = 5e5;
/// Photon count of the L2 noise level.
pub const PHOTONS_L2: f64 = 1e5;

/// Draws `N ~ Poisson(I0 * exp(-y))` per bin and returns `-ln(max(N, 1) / I0)`.
///
/// Negative line integrals are clamped to zero first. Every bin draws from its
/// own ChaCha stream selected by `(angle_index, detector_index)` under `seed`,
/// so the result does not depend on evaluation order.
pub fn add_poisson_noise(sino: &Sinogram, photons_i0: f64, seed: u64) -> Result<Sinogram> {
    if !(photons_i0 > 0.0 && photons_i0.is_finite()) {
        return Err(config("photon count must be positive"));
    }
    let d = sino.geometry().num_detectors as u64;
    let mut out = sino.clone();
    for (angle, row) in out.rows_mut() {
        for (det, y) in row.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(angle as u64 * d + det as u64);
            let mean = photons_i0 * libm::exp(-y.max(0.0));
            let n = if mean > 0.0 {
                Poisson::new(mean)
                    .map_err(|_| config("invalid Poisson mean"))?
                    .sample(&mut rng)
            } else {
                0.0
            };
            *y = -libm::log(n.max(1.0) / photons_i0);
        }
    }
    Ok(out)
}
