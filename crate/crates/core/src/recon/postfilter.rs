//! Small residual convolutional filter applied after the classical solver:
//! `out = u + net(u)`, with `net` a stack of same-padded 2-D convolutions and
//! ReLU between layers.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config, Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq)]
pub struct PostFilterModel {
    /// Channel widths including input and output, e.g. `[1, 8, 1]`.
    channels: Vec<usize>,
    /// Odd square kernel side.
    kernel: usize,
    /// Per layer: weights `[out][in][ky][kx]` followed by `out` biases.
    params: Vec<f64>,
}

/// Activations kept from the forward pass.
struct Cache {
    /// Input of every layer, per channel (`inputs[0]` is the image).
    inputs: Vec<Vec<Vec<f64>>>,
    /// Pre-activation of every layer.
    pre: Vec<Vec<Vec<f64>>>,
}

impl PostFilterModel {
    /// All-zero parameters: the model is the identity map.
    pub fn zeros(channels: Vec<usize>, kernel: usize) -> Result<Self> {
        if channels.len() < 2 || channels[0] != 1 || *channels.last().unwrap() != 1 {
            return Err(config("post-filter must map one channel to one channel"));
        }
        if channels.iter().any(|&c| c == 0) {
            return Err(config("channel widths must be positive"));
        }
        if kernel % 2 == 0 {
            return Err(config("post-filter kernel side must be odd"));
        }
        let n = Self::count_params(&channels, kernel);
        Ok(Self {
            channels,
            kernel,
            params: vec![0.0; n],
        })
    }

    /// Default architecture: two 5x5 layers, `1 -> 8 -> 1`.
    pub fn default_architecture() -> Self {
        Self::zeros(vec![1, 8, 1], 5).expect("valid default architecture")
    }

    /// Random hidden layers, zero last layer: starts as the identity map with
    /// non-zero gradients for the last layer.
    pub fn identity_init(channels: Vec<usize>, kernel: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(channels, kernel)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = m.num_layers();
        for l in 0..n_layers - 1 {
            let (cin, _) = (m.channels[l], m.channels[l + 1]);
            let bound = libm::sqrt(6.0 / (cin * kernel * kernel) as f64);
            let (w_off, w_len, _, _) = m.layer_offsets(l);
            for v in &mut m.params[w_off..w_off + w_len] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(m)
    }

    fn count_params(channels: &[usize], kernel: usize) -> usize {
        channels
            .windows(2)
            .map(|w| w[0] * w[1] * kernel * kernel + w[1])
            .sum()
    }

    /// `(weight_offset, weight_len, bias_offset, bias_len)` of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize, usize, usize) {
        let k2 = self.kernel * self.kernel;
        let mut off = 0;
        for i in 0..l {
            off += self.channels[i] * self.channels[i + 1] * k2 + self.channels[i + 1];
        }
        let wl = self.channels[l] * self.channels[l + 1] * k2;
        (off, wl, off + wl, self.channels[l + 1])
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn num_layers(&self) -> usize {
        self.channels.len() - 1
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
            return Err(config("parameter vector has the wrong length"));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(config("parameters must be finite"));
        }
        self.params = params;
        Ok(())
    }

    fn conv(&self, l: usize, input: &[Vec<f64>], h: usize, w: usize) -> Vec<Vec<f64>> {
        let (cin, cout) = (self.channels[l], self.channels[l + 1]);
        let k = self.kernel;
        let p = (k / 2) as isize;
        let (w_off, _, b_off, _) = self.layer_offsets(l);
        let mut out = vec![vec![0.0; h * w]; cout];
        for (o, plane) in out.iter_mut().enumerate() {
            let b = self.params[b_off + o];
            plane.iter_mut().for_each(|v| *v = b);
            for (i, src) in input.iter().enumerate().take(cin) {
                for ky in 0..k {
                    for kx in 0..k {
                        let wgt = self.params[w_off + ((o * cin + i) * k + ky) * k + kx];
                        if wgt == 0.0 {
                            continue;
                        }
                        let dy = ky as isize - p;
                        let dx = kx as isize - p;
                        let r_lo = (-dy).max(0) as usize;
                        let r_hi = (h as isize - dy).min(h as isize).max(0) as usize;
                        let c_lo = (-dx).max(0) as usize;
                        let c_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                        for r in r_lo..r_hi {
                            let sr = (r as isize + dy) as usize;
                            let dst = &mut plane[r * w + c_lo..r * w + c_hi];
                            let s0 = (sr * w) as isize + c_lo as isize + dx;
                            let srcrow = &src[s0 as usize..s0 as usize + (c_hi - c_lo)];
                            for (d, s) in dst.iter_mut().zip(srcrow) {
                                *d += wgt * s;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn forward_cached(&self, u: &Image) -> (Image, Cache) {
        let (h, w) = u.dims();
        let mut inputs = vec![vec![u.data().to_vec()]];
        let mut pre = Vec::new();
        let n = self.num_layers();
        for l in 0..n {
            let z = self.conv(l, &inputs[l], h, w);
            if l + 1 < n {
                let a = z
                    .iter()
                    .map(|plane| plane.iter().map(|&v| v.max(0.0)).collect())
                    .collect();
                inputs.push(a);
            }
            pre.push(z);
        }
        let net = &pre[n - 1][0];
        let out: Vec<f64> = u.data().iter().zip(net).map(|(a, b)| a + b).collect();
        (
            Image::from_vec(h, w, out).expect("finite forward"),
            Cache { inputs, pre },
        )
    }

    /// `u + net(u)`. Convolutions are shift-invariant, so any image size works.
    pub fn forward(&self, u: &Image) -> Image {
        if self.params.iter().all(|&v| v == 0.0) {
            return u.clone();
        }
        self.forward_cached(u).0
    }

    /// Reverse-mode gradients of `<upstream, forward(u)>` with respect to the
    /// parameters and the input image.
    pub fn backward(&self, u: &Image, upstream: &Image) -> Result<(Vec<f64>, Image)> {
        if u.dims() != upstream.dims() {
            return Err(Error::Shape {
                expected: u.dims(),
                actual: upstream.dims(),
            });
        }
        let (h, w) = u.dims();
        let (_, cache) = self.forward_cached(u);
        let k = self.kernel;
        let p = (k / 2) as isize;
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = vec![upstream.data().to_vec()];
        for l in (0..self.num_layers()).rev() {
            let (cin, cout) = (self.channels[l], self.channels[l + 1]);
            let (w_off, _, b_off, _) = self.layer_offsets(l);
            let input = &cache.inputs[l];
            let mut d_in = vec![vec![0.0; h * w]; cin];
            for (o, dz) in delta.iter().enumerate().take(cout) {
                grads[b_off + o] += dz.iter().sum::<f64>();
                for i in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let widx = w_off + ((o * cin + i) * k + ky) * k + kx;
                            let wgt = self.params[widx];
                            let dy = ky as isize - p;
                            let dx = kx as isize - p;
                            let r_lo = (-dy).max(0) as usize;
                            let r_hi = (h as isize - dy).min(h as isize).max(0) as usize;
                            let c_lo = (-dx).max(0) as usize;
                            let c_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                            let mut gw = 0.0;
                            for r in r_lo..r_hi {
                                let sr = (r as isize + dy) as usize;
                                let s0 = ((sr * w) as isize + c_lo as isize + dx) as usize;
                                let len = c_hi - c_lo;
                                let dzr = &dz[r * w + c_lo..r * w + c_hi];
                                let src = &input[i][s0..s0 + len];
                                for (g, s) in dzr.iter().zip(src) {
                                    gw += g * s;
                                }
                                if wgt != 0.0 {
                                    let dst = &mut d_in[i][s0..s0 + len];
                                    for (d, g) in dst.iter_mut().zip(dzr) {
                                        *d += wgt * g;
                                    }
                                }
                            }
                            grads[widx] += gw;
                        }
                    }
                }
            }
            if l > 0 {
                // through the ReLU of the previous layer
                for (plane, z) in d_in.iter_mut().zip(&cache.pre[l - 1]) {
                    for (d, &zv) in plane.iter_mut().zip(z) {
                        if zv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
            }
            delta = d_in;
        }
        let input_grad: Vec<f64> = upstream
            .data()
            .iter()
            .zip(&delta[0])
            .map(|(a, b)| a + b)
            .collect();
        Ok((grads, Image::from_vec(h, w, input_grad)?))
    }
}
