//! Image quality metrics: PSNR, RMSE and single-scale SSIM, plus their
//! region-restricted variants.

use crate::error::{config, Error, Result};
use crate::image::Image;
use crate::phantom::RoiMask;

/// SSIM window side length.
pub const SSIM_WINDOW: usize = 7;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiReport {
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
}

/// Whole-image quality of a reconstruction, with optional RoI-restricted values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// dB; `f64::INFINITY` when the images are identical.
    pub psnr: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub roi: Option<RoiReport>,
}

impl MetricReport {
    /// Applies the ground truth's min-max window to both images and measures
    /// on the unit range.
    pub fn evaluate(ground_truth: &Image, recon: &Image, roi: Option<&RoiMask>) -> Result<Self> {
        ground_truth.check_same_shape(recon)?;
        let (lo, hi) = ground_truth.min_max();
        let gt = ground_truth.normalized_by(lo, hi);
        let rc = recon.normalized_by(lo, hi);
        let roi = match roi {
            Some(mask) => Some(roi_metrics(&gt, &rc, mask)?),
            None => None,
        };
        Ok(Self {
            psnr: psnr(&gt, &rc, 1.0)?,
            ssim: ssim(&gt, &rc)?,
            rmse: rmse(&gt, &rc)?,
            roi,
        })
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.is_empty() {
        return Err(Error::Empty("image"));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64)
}

fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * libm::log10(data_range * data_range / mse)
    }
}

pub fn psnr(a: &Image, b: &Image, data_range: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, data_range))
}

pub fn rmse(a: &Image, b: &Image) -> Result<f64> {
    Ok(libm::sqrt(mse(a, b)?))
}

/// Normalized 7x7 Gaussian window, row-major.
pub fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut win = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut total = 0.0;
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let (dy, dx) = (i as f64 - half, j as f64 - half);
            let v = libm::exp(-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
            win[i * SSIM_WINDOW + j] = v;
            total += v;
        }
    }
    for v in &mut win {
        *v /= total;
    }
    win
}

/// Local SSIM of the window whose top-left corner is `(r, c)`.
fn local_ssim(a: &Image, b: &Image, win: &[f64], r: usize, c: usize) -> f64 {
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);
    let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let wgt = win[i * SSIM_WINDOW + j];
            let x = a.get(r + i, c + j);
            let y = b.get(r + i, c + j);
            ma += wgt * x;
            mb += wgt * y;
            saa += wgt * x * x;
            sbb += wgt * y * y;
            sab += wgt * x * y;
        }
    }
    let va = saa - ma * ma;
    let vb = sbb - mb * mb;
    let cov = sab - ma * mb;
    ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
}

/// Mean local SSIM over every fully contained 7x7 Gaussian window, for
/// images on the unit range.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(config("image smaller than the SSIM window"));
    }
    let win = gaussian_window();
    let mut total = 0.0;
    let mut n = 0usize;
    for r in 0..=h - SSIM_WINDOW {
        for c in 0..=w - SSIM_WINDOW {
            total += local_ssim(a, b, &win, r, c);
            n += 1;
        }
    }
    Ok(total / n as f64)
}

/// Metrics over the masked pixels. SSIM averages the local index of windows
/// inside the mask's bounding box (grown to at least one window) whose
/// centre pixel is masked.
pub fn roi_metrics(a: &Image, b: &Image, mask: &RoiMask) -> Result<RoiReport> {
    a.check_same_shape(b)?;
    if mask.dims() != a.dims() {
        return Err(Error::Shape {
            expected: a.dims(),
            actual: mask.dims(),
        });
    }
    let (r0, r1, c0, c1) = mask.bounding_box().ok_or(Error::Empty("RoI mask"))?;
    let (h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(config("image smaller than the SSIM window"));
    }

    let mut se = 0.0;
    let mut n = 0usize;
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                let d = a.get(r, c) - b.get(r, c);
                se += d * d;
                n += 1;
            }
        }
    }
    let mse = se / n as f64;

    let grow = |lo: usize, hi: usize, len: usize| -> (usize, usize) {
        let mut lo = lo;
        let mut hi = hi;
        while hi + 1 - lo < SSIM_WINDOW {
            if lo > 0 {
                lo -= 1;
            }
            if hi + 1 - lo < SSIM_WINDOW && hi + 1 < len {
                hi += 1;
            }
        }
        (lo, hi)
    };
    let (r0, r1) = grow(r0, r1, h);
    let (c0, c1) = grow(c0, c1, w);
    let win = gaussian_window();
    let half = SSIM_WINDOW / 2;
    let (mut inside, mut n_inside, mut all, mut n_all) = (0.0, 0usize, 0.0, 0usize);
    for r in r0..=r1 + 1 - SSIM_WINDOW {
        for c in c0..=c1 + 1 - SSIM_WINDOW {
            let s = local_ssim(a, b, &win, r, c);
            all += s;
            n_all += 1;
            if mask.get(r + half, c + half) {
                inside += s;
                n_inside += 1;
            }
        }
    }
    let ssim = if n_inside > 0 {
        inside / n_inside as f64
    } else {
        all / n_all as f64
    };
    Ok(RoiReport {
        psnr: psnr_from_mse(mse, 1.0),
        ssim,
        rmse: libm::sqrt(mse),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_vec(h, w, (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = random(16, 16, 1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let z = Image::filled(16, 16, 0.2);
        let b = Image::filled(16, 16, 0.3);
        assert!((psnr(&z, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&z, &Image::zeros(4, 4), 1.0).is_err());
    }

    /// Extended precision oracle: compensated (Kahan-Babuska) summation of
    /// the squared error, then log10 through ln.
    #[test]
    fn psnr_matches_compensated_oracle() {
        let a = random(40, 40, 2);
        let b = random(40, 40, 3);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for (x, y) in a.data().iter().zip(b.data()) {
            let v = (x - y) * (x - y);
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        }
        let mse = (sum + comp) / 1600.0;
        let oracle = -10.0 * libm::log(mse) / core::f64::consts::LN_10;
        assert!((psnr(&a, &b, 1.0).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn rmse_examples_and_psnr_identity() {
        let a = random(16, 16, 4);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((rmse(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        let c = random(16, 16, 5);
        let r = rmse(&a, &c).unwrap();
        let p = psnr(&a, &c, 1.0).unwrap();
        assert!((libm::pow(10.0, -p / 10.0) - r * r).abs() < 1e-12);
    }

    #[test]
    fn ssim_examples() {
        let a = random(16, 16, 6);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let c1 = Image::filled(16, 16, 0.5);
        let c2 = Image::filled(16, 16, 0.25);
        let expected = (2.0 * 0.5 * 0.25 + 1e-4) / (0.25 + 0.0625 + 1e-4);
        assert!((ssim(&c1, &c2).unwrap() - expected).abs() < 1e-12);
        assert!(ssim(&Image::zeros(6, 6), &Image::zeros(6, 6)).is_err());
    }

    #[test]
    fn ssim_matches_naive_window_oracle() {
        let a = random(20, 17, 7);
        let b = random(20, 17, 8);
        // Naive: gather each window into a vector and apply the textbook
        // weighted statistics.
        let mut wts = Vec::new();
        for i in 0..7 {
            for j in 0..7 {
                let (dy, dx) = (i as f64 - 3.0, j as f64 - 3.0);
                wts.push(libm::exp(-(dx * dx + dy * dy) / 4.5));
            }
        }
        let tot: f64 = wts.iter().sum();
        for v in &mut wts {
            *v /= tot;
        }
        let mut acc = 0.0;
        let mut n = 0;
        for r in 0..=13 {
            for c in 0..=10 {
                let xs: Vec<f64> = (0..49).map(|k| a.get(r + k / 7, c + k % 7)).collect();
                let ys: Vec<f64> = (0..49).map(|k| b.get(r + k / 7, c + k % 7)).collect();
                let mx: f64 = xs.iter().zip(&wts).map(|(x, w)| x * w).sum();
                let my: f64 = ys.iter().zip(&wts).map(|(y, w)| y * w).sum();
                let vx: f64 = xs.iter().zip(&wts).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
                let vy: f64 = ys.iter().zip(&wts).map(|(y, w)| w * (y - my) * (y - my)).sum();
                let cv: f64 = xs.iter().zip(&ys).zip(&wts).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
                acc += ((2.0 * mx * my + 1e-4) * (2.0 * cv + 9e-4))
                    / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
                n += 1;
            }
        }
        assert!((ssim(&a, &b).unwrap() - acc / n as f64).abs() < 1e-10);
    }

    #[test]
    fn roi_full_mask_equals_whole_image() {
        let a = random(16, 16, 9);
        let b = random(16, 16, 10);
        let m = RoiMask::full(16, 16);
        let r = roi_metrics(&a, &b, &m).unwrap();
        assert!((r.psnr - psnr(&a, &b, 1.0).unwrap()).abs() < 1e-12);
        assert!((r.rmse - rmse(&a, &b).unwrap()).abs() < 1e-12);
        assert!((r.ssim - ssim(&a, &b).unwrap()).abs() < 1e-12);
        assert_eq!(roi_metrics(&a, &a, &m).unwrap().rmse, 0.0);
        let empty = RoiMask::from_vec(16, 16, alloc::vec![0; 256]).unwrap();
        assert!(roi_metrics(&a, &b, &empty).is_err());
    }

    #[test]
    fn roi_half_plane_hand_split() {
        // Left half differs by 0.2, right half by 0.05.
        let a = Image::filled(16, 16, 0.5);
        let mut b = a.clone();
        for r in 0..16 {
            for c in 0..16 {
                b.set(r, c, if c < 8 { 0.7 } else { 0.55 });
            }
        }
        let left = RoiMask::from_vec(16, 16, (0..256).map(|p| (p % 16 < 8) as u8).collect()).unwrap();
        let right = RoiMask::from_vec(16, 16, (0..256).map(|p| (p % 16 >= 8) as u8).collect()).unwrap();
        let rl = roi_metrics(&a, &b, &left).unwrap();
        let rr = roi_metrics(&a, &b, &right).unwrap();
        assert!((rl.rmse - 0.2).abs() < 1e-12);
        assert!((rr.rmse - 0.05).abs() < 1e-12);
        assert!((rl.psnr - 20.0 * libm::log10(1.0 / 0.2)).abs() < 1e-9);
        // window fully on the left half: constant 0.5 vs constant 0.7
        let full_left = (2.0 * 0.5 * 0.7 + 1e-4) / (0.25 + 0.49 + 1e-4);
        assert!(rl.ssim < 1.0 && rl.ssim > full_left - 0.2);
    }

    #[test]
    fn evaluate_normalizes_by_ground_truth() {
        let gt = Image::from_vec(8, 8, (0..64).map(|p| 2.0 + 2.0 * (p as f64) / 63.0).collect()).unwrap();
        let rc = gt.map(|v| v + 0.2);
        let rep = MetricReport::evaluate(&gt, &rc, None).unwrap();
        assert!((rep.rmse - 0.1).abs() < 1e-12);
        assert!((rep.psnr - 20.0).abs() < 1e-9);
    }
}
