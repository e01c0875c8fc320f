use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reliability_score;
use crate::error::{config, Error, Result};
use crate::geometry::Geometry;
use crate::image::Image;
use crate::projector::forward_project_all;

/// Hidden widths of the scorer MLP.
pub const SCORER_HIDDEN: [usize; 2] = [64, 32];

/// Anything that can turn the `T` re-projected rows of the current estimate
/// into one score per angle.
pub trait CandidateScorer {
    fn score_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>>;
}

/// `D -> 64 -> 32 -> 1` perceptron, ReLU between layers, sigmoid output.
///
/// Rows are divided by `input_scale` before entering the network. The scale is
/// part of the model so that a checkpoint scores exactly like the trained one.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    input_dim: usize,
    input_scale: f64,
    /// Per layer: weights `[out][in]` then `out` biases.
    params: Vec<f64>,
}

struct Activations {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    logit: f64,
    out: f64,
}

/// Logit magnitude beyond which the sigmoid would round to exactly 0 or 1.
const LOGIT_CLAMP: f64 = 36.0;

fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

impl ScorerModel {
    fn widths(d: usize) -> [usize; 4] {
        [d, SCORER_HIDDEN[0], SCORER_HIDDEN[1], 1]
    }

    fn count(d: usize) -> usize {
        Self::widths(d).windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// All-zero weights: scores every row 0.5.
    pub fn zeros(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(config("scorer input dimension must be positive"));
        }
        Ok(Self {
            input_dim,
            input_scale: 1.0,
            params: vec![0.0; Self::count(input_dim)],
        })
    }

    /// Uniform Glorot initialization from a seed.
    pub fn random(input_dim: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(input_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = Self::widths(input_dim);
        let mut off = 0;
        for w in widths.windows(2) {
            let bound = libm::sqrt(6.0 / (w[0] + w[1]) as f64);
            for v in &mut m.params[off..off + w[0] * w[1]] {
                *v = rng.random_range(-bound..bound);
            }
            off += w[0] * w[1] + w[1];
        }
        Ok(m)
    }

    pub fn from_parts(input_dim: usize, input_scale: f64, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(input_dim)?;
        m.set_input_scale(input_scale)?;
        m.set_params(params)?;
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn set_input_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(config("scorer input scale must be positive and finite"));
        }
        self.input_scale = scale;
        Ok(())
    }

    /// Layer widths including input and output.
    pub fn layer_widths(&self) -> [usize; 4] {
        Self::widths(self.input_dim)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(config("scorer parameter vector has the wrong length"));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(config("scorer parameters must be finite"));
        }
        self.params = params;
        Ok(())
    }

    fn dense(&self, off: usize, input: &[f64], out_dim: usize, relu: bool) -> Vec<f64> {
        let n_in = input.len();
        let b_off = off + n_in * out_dim;
        (0..out_dim)
            .map(|o| {
                let w = &self.params[off + o * n_in..off + (o + 1) * n_in];
                let z = self.params[b_off + o] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                if relu {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.input_dim {
            return Err(Error::Shape {
                expected: (1, self.input_dim),
                actual: (1, row.len()),
            });
        }
        Ok(())
    }

    fn activations(&self, row: &[f64]) -> Activations {
        let [d, h1n, h2n, _] = self.layer_widths();
        let x: Vec<f64> = row.iter().map(|v| v / self.input_scale).collect();
        let off2 = d * h1n + h1n;
        let off3 = off2 + h1n * h2n + h2n;
        let h1 = self.dense(0, &x, h1n, true);
        let h2 = self.dense(off2, &h1, h2n, true);
        let logit = self.dense(off3, &h2, 1, false)[0];
        Activations {
            x,
            h1,
            h2,
            logit,
            out: sigmoid(logit),
        }
    }

    pub fn forward(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.activations(row).out)
    }

    /// Parameter gradient of `upstream * forward(row)`.
    pub fn backward(&self, row: &[f64], upstream: f64) -> Result<Vec<f64>> {
        self.check_row(row)?;
        let mut grads = vec![0.0; self.params.len()];
        self.accumulate_grad(row, upstream, &mut grads);
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but adds into `grads`.
    pub fn accumulate_grad(&self, row: &[f64], upstream: f64, grads: &mut [f64]) {
        let [d, h1n, h2n, _] = self.layer_widths();
        let a = self.activations(row);
        let off2 = d * h1n + h1n;
        let off3 = off2 + h1n * h2n + h2n;
        if a.logit.abs() >= LOGIT_CLAMP {
            return;
        }
        let dz3 = upstream * a.out * (1.0 - a.out);
        // layer 3
        for (j, &h) in a.h2.iter().enumerate() {
            grads[off3 + j] += dz3 * h;
        }
        grads[off3 + h2n] += dz3;
        // layer 2
        let mut dz2 = vec![0.0; h2n];
        for j in 0..h2n {
            if a.h2[j] > 0.0 {
                dz2[j] = dz3 * self.params[off3 + j];
            }
        }
        let mut dh1 = vec![0.0; h1n];
        for (o, &g) in dz2.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let w = off2 + o * h1n;
            for i in 0..h1n {
                grads[w + i] += g * a.h1[i];
                dh1[i] += g * self.params[w + i];
            }
            grads[off2 + h1n * h2n + o] += g;
        }
        // layer 1
        for (o, &g0) in dh1.iter().enumerate() {
            if a.h1[o] <= 0.0 || g0 == 0.0 {
                continue;
            }
            let w = o * d;
            for i in 0..d {
                grads[w + i] += g0 * a.x[i];
            }
            grads[d * h1n + o] += g0;
        }
    }
}

impl CandidateScorer for ScorerModel {
    fn score_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.forward(r)).collect()
    }
}

/// Scores each angle by its reliability against the clean measured row; an
/// upper bound on what a learned scorer can know.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleScorer {
    gt_rows: Vec<Vec<f64>>,
}

impl OracleScorer {
    pub fn new(gt_rows: Vec<Vec<f64>>) -> Self {
        Self { gt_rows }
    }
}

impl CandidateScorer for OracleScorer {
    fn score_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if rows.len() != self.gt_rows.len() {
            return Err(Error::Shape {
                expected: (self.gt_rows.len(), 0),
                actual: (rows.len(), 0),
            });
        }
        rows.iter()
            .zip(&self.gt_rows)
            .map(|(r, g)| reliability_score(r, g))
            .collect()
    }
}

/// Same score for every angle; selection then reduces to the tie-break rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantScorer(pub f64);

impl CandidateScorer for ConstantScorer {
    fn score_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(vec![self.0; rows.len()])
    }
}

/// Wraps a scorer and counts how often it is consulted.
#[derive(Debug)]
pub struct CountingScorer<S> {
    pub inner: S,
    calls: Cell<usize>,
}

impl<S> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<S: CandidateScorer> CandidateScorer for CountingScorer<S> {
    fn score_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.score_rows(rows)
    }
}

impl<S: CandidateScorer + ?Sized> CandidateScorer for &S {
    fn score_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        (**self).score_rows(rows)
    }
}

/// Re-projects the estimate at every candidate angle and scores each row.
pub fn score_all_candidates(
    u_hat: &Image,
    scorer: &dyn CandidateScorer,
    geom: &Geometry,
) -> Result<Vec<f64>> {
    let rows = forward_project_all(u_hat, geom)?;
    scorer.score_rows(&rows)
}
