//! Central-difference verification of every analytic gradient in the
//! training chain.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::ScorerModel;
use crate::error::Result;
use crate::image::Image;
use crate::phantom::RoiMask;
use crate::recon::PostFilterModel;
use crate::training::{loss_agent, loss_recon, loss_recon_roi};

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compares `analytic` with central differences of `f` at `x`, on the given
/// coordinates (all when `None`).
pub fn check_gradient(
    name: &str,
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    step: f64,
    coords: Option<&[usize]>,
) -> GradCheck {
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let mut probe = x.to_vec();
    let mut worst = (0.0f64, 0usize);
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + step;
        let fp = f(&probe);
        probe[i] = orig - step;
        let fm = f(&probe);
        probe[i] = orig;
        let fd = (fp - fm) / (2.0 * step);
        let rel = libm::fabs(fd - analytic[i]) / fd.abs().max(analytic[i].abs()).max(REL_FLOOR);
        if rel > worst.0 || rel.is_nan() {
            worst = (rel, i);
        }
    }
    GradCheck {
        name: String::from(name),
        checked: coords.len(),
        max_rel_err: worst.0,
        worst_index: worst.1,
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_image(rng: &mut ChaCha8Rng, n: usize) -> Image {
    Image::from_vec(n, n, random_vec(rng, n * n, 1.0)).expect("finite")
}

/// Checks the scorer, the post-filter, the three losses and the two full
/// chains used by training on random data from `seed`.
pub fn gradient_suite(seed: u64, step: f64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let n = 10;

    // scorer parameters
    let d = 21;
    let mut scorer = ScorerModel::random(d, seed)?;
    scorer.set_input_scale(1.7)?;
    let row = random_vec(&mut rng, d, 2.0);
    let g = scorer.backward(&row, 1.0)?;
    out.push(check_gradient(
        "scorer parameters",
        |p| {
            let mut m = scorer.clone();
            m.params_mut().copy_from_slice(p);
            m.forward(&row).expect("row length")
        },
        scorer.params(),
        &g,
        step,
        None,
    ));

    // post-filter parameters and input
    let mut filter = PostFilterModel::default_architecture();
    for v in filter.params_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    let u = random_image(&mut rng, n);
    let up = random_image(&mut rng, n);
    let (gp, gu) = filter.backward(&u, &up)?;
    out.push(check_gradient(
        "post-filter parameters",
        |p| {
            let mut m = filter.clone();
            m.params_mut().copy_from_slice(p);
            m.forward(&u).dot(&up)
        },
        filter.params(),
        &gp,
        step,
        None,
    ));
    out.push(check_gradient(
        "post-filter input",
        |x| {
            let img = Image::from_vec(n, n, x.to_vec()).expect("finite");
            filter.forward(&img).dot(&up)
        },
        u.data(),
        gu.data(),
        step,
        None,
    ));

    // losses
    let target = random_image(&mut rng, n);
    let mask = RoiMask::from_vec(n, n, (0..n * n).map(|_| rng.random_range(0..2u8)).collect())?;
    let as_img = |x: &[f64]| Image::from_vec(n, n, x.to_vec()).expect("finite");
    let (_, g) = loss_recon(&u, &target)?;
    out.push(check_gradient(
        "reconstruction loss",
        |x| loss_recon(&as_img(x), &target).expect("shape").0,
        u.data(),
        g.data(),
        step,
        None,
    ));
    let (_, g) = loss_recon_roi(&u, &target, &mask)?;
    out.push(check_gradient(
        "RoI reconstruction loss",
        |x| loss_recon_roi(&as_img(x), &target, &mask).expect("shape").0,
        u.data(),
        g.data(),
        step,
        None,
    ));
    let scores = random_vec(&mut rng, 30, 1.0);
    let targets = random_vec(&mut rng, 30, 1.0);
    let (_, g) = loss_agent(&scores, &targets)?;
    out.push(check_gradient(
        "agent loss",
        |s| loss_agent(s, &targets).expect("length").0,
        &scores,
        &g,
        step,
        None,
    ));

    // reconstruction loss through the post-filter
    let (_, upstream) = loss_recon(&filter.forward(&u), &target)?;
    let (gp, _) = filter.backward(&u, &upstream)?;
    out.push(check_gradient(
        "reconstruction chain",
        |p| {
            let mut m = filter.clone();
            m.params_mut().copy_from_slice(p);
            loss_recon(&m.forward(&u), &target).expect("shape").0
        },
        filter.params(),
        &gp,
        step,
        None,
    ));

    // agent loss through the scorer over a batch of rows
    let rows: Vec<Vec<f64>> = (0..12).map(|_| random_vec(&mut rng, d, 2.0)).collect();
    let row_targets = random_vec(&mut rng, rows.len(), 0.5).iter().map(|v| v + 0.5).collect::<Vec<_>>();
    let agent_loss = |m: &ScorerModel| {
        let s: Vec<f64> = rows.iter().map(|r| m.forward(r).expect("row length")).collect();
        loss_agent(&s, &row_targets).expect("length")
    };
    let (_, dl) = agent_loss(&scorer);
    let mut g = alloc::vec![0.0; scorer.num_params()];
    for (r, d) in rows.iter().zip(&dl) {
        scorer.accumulate_grad(r, *d, &mut g);
    }
    out.push(check_gradient(
        "agent chain",
        |p| {
            let mut m = scorer.clone();
            m.params_mut().copy_from_slice(p);
            agent_loss(&m).0
        },
        scorer.params(),
        &g,
        step,
        None,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for check in gradient_suite(3, FD_STEP).unwrap() {
            assert!(check.passes(1e-4), "{check:?}");
            assert!(check.checked > 0);
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let ok = check_gradient("q", f, &[1.0, 2.0], &[2.0, 3.0], FD_STEP, None);
        assert!(ok.passes(1e-8));
        let bad = check_gradient("q", f, &[1.0, 2.0], &[2.0, 3.3], FD_STEP, Some(&[1]));
        assert!(!bad.passes(1e-4));
        assert_eq!(bad.worst_index, 1);
        assert_eq!(bad.checked, 1);
    }
}
