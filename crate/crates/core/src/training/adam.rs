use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, Error, Result};

/// Bias-corrected Adam with per-parameter moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One in-place update of `params` from `grads`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(config("Adam parameter, gradient and moment lengths differ"));
    }
    let next_t = state.t + 1;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical {
            iteration: next_t as usize,
            what: "non-finite gradient",
        });
    }
    state.t = next_t;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - libm::pow(b1, next_t as f64);
    let c2 = 1.0 - libm::pow(b2, next_t as f64);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.lr * m_hat / (libm::sqrt(v_hat) + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(3, 1e-3);
        adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let lr = 1e-4;
        let grads = [1e-3, -5e-3, 0.7, -42.0, 1e6];
        let mut p = vec![0.0; 5];
        let mut s = AdamState::new(5, lr);
        adam_step(&mut p, &grads, &mut s).unwrap();
        for (x, g) in p.iter().zip(grads) {
            assert!(x.abs() >= 0.99 * lr && x.abs() <= lr);
            assert_eq!(x.signum(), -g.signum());
        }
    }

    #[test]
    fn two_steps_on_a_quadratic_match_closed_form() {
        // f(x) = a x^2 / 2
        let (a, x0, lr) = (3.0f64, 0.8f64, 0.05f64);
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
        let g1 = a * x0;
        let x1 = x0 - lr * g1 / (g1.abs() + eps);
        let g2 = a * x1;
        let m_hat = (b1 * (1.0 - b1) * g1 + (1.0 - b1) * g2) / (1.0 - b1 * b1);
        let v_hat = (b2 * (1.0 - b2) * g1 * g1 + (1.0 - b2) * g2 * g2) / (1.0 - b2 * b2);
        let x2 = x1 - lr * m_hat / (v_hat.sqrt() + eps);

        let mut x = vec![x0];
        let mut s = AdamState::new(1, lr);
        let g = a * x[0];
        adam_step(&mut x, &[g], &mut s).unwrap();
        assert!((x[0] - x1).abs() < 1e-12);
        let g = a * x[0];
        adam_step(&mut x, &[g], &mut s).unwrap();
        assert!((x[0] - x2).abs() < 1e-12);
    }

    #[test]
    fn rejects_nan_and_shape_errors() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new(2, 1e-3);
        assert!(matches!(
            adam_step(&mut p, &[f64::NAN, 0.0], &mut s),
            Err(Error::Numerical { iteration: 1, .. })
        ));
        assert_eq!(s.t, 0);
        assert!(adam_step(&mut p, &[0.0], &mut s).is_err());
    }

    proptest! {
        #[test]
        fn step_size_is_bounded(
            grads in proptest::collection::vec(-1e3f64..1e3, 1..40),
            lr in 1e-5f64..1e-1,
        ) {
            let mut p = vec![0.0];
            let mut s = AdamState::new(1, lr);
            let bound = lr / (1.0 - s.beta1);
            for g in grads {
                let before = p[0];
                adam_step(&mut p, &[g], &mut s).unwrap();
                prop_assert!((p[0] - before).abs() <= bound * (1.0 + 1e-12));
                prop_assert!(s.m[0].is_finite() && s.v[0].is_finite());
            }
        }
    }
}
