use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::phantom::RoiMask;

/// Mean squared error and its gradient `2 (u_hat - u) / N`.
pub fn loss_recon(u_hat: &Image, u_gt: &Image) -> Result<(f64, Image)> {
    u_hat.check_same_shape(u_gt)?;
    weighted(u_hat, u_gt, |_| 1.0)
}

/// Mean of `((1 + M) (u_hat - u))^2`: RoI pixels count four times as much.
pub fn loss_recon_roi(u_hat: &Image, u_gt: &Image, mask: &RoiMask) -> Result<(f64, Image)> {
    u_hat.check_same_shape(u_gt)?;
    if mask.dims() != u_hat.dims() {
        return Err(Error::Shape {
            expected: u_hat.dims(),
            actual: mask.dims(),
        });
    }
    let m = mask.data();
    weighted(u_hat, u_gt, |p| 1.0 + f64::from(m[p]))
}

fn weighted(u_hat: &Image, u_gt: &Image, w: impl Fn(usize) -> f64) -> Result<(f64, Image)> {
    let n = u_hat.len() as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = u_hat
        .data()
        .iter()
        .zip(u_gt.data())
        .enumerate()
        .map(|(p, (a, b))| {
            let w2 = w(p) * w(p);
            let d = a - b;
            loss += w2 * d * d;
            2.0 * w2 * d / n
        })
        .collect();
    let (h, wd) = u_hat.dims();
    Ok((loss / n, Image::from_vec(h, wd, grad)?))
}

/// Mean over angles of `(score - target)^2` and its gradient per score.
pub fn loss_agent(scores: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != targets.len() {
        return Err(Error::Shape {
            expected: (1, targets.len()),
            actual: (1, scores.len()),
        });
    }
    if scores.is_empty() {
        return Err(Error::Empty("score vector"));
    }
    let n = scores.len() as f64;
    let loss = scores
        .iter()
        .zip(targets)
        .map(|(s, t)| (s - t) * (s - t))
        .sum::<f64>()
        / n;
    let grad = scores
        .iter()
        .zip(targets)
        .map(|(s, t)| 2.0 * (s - t) / n)
        .collect();
    Ok((loss, grad))
}
