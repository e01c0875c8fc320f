use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, Error, Result};

/// Row-major `h x w` grid of attenuation values.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn filled(h: usize, w: usize, value: f64) -> Self {
        Self {
            h,
            w,
            data: vec![value; h * w],
        }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w {
            return Err(config("image data length does not match h*w"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(config("image contains non-finite values"));
        }
        Ok(Self { h, w, data })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.w + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.w + c] = v;
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Affine rescale mapping `[lo, hi]` onto `[0, 1]`; a flat window maps to zero.
    pub fn normalized_by(&self, lo: f64, hi: f64) -> Image {
        let span = hi - lo;
        if span <= 0.0 {
            return self.map(|v| v - lo);
        }
        self.map(|v| (v - lo) / span)
    }

    /// Mean over non-overlapping `f x f` blocks; dims must be divisible by `f`.
    pub fn block_average(&self, f: usize) -> Result<Image> {
        if f == 0 || self.h % f != 0 || self.w % f != 0 {
            return Err(config("block size must divide image dimensions"));
        }
        let (h, w) = (self.h / f, self.w / f);
        let mut out = Image::zeros(h, w);
        let norm = (f * f) as f64;
        for r in 0..self.h {
            for c in 0..self.w {
                out.data[(r / f) * w + c / f] += self.get(r, c) / norm;
            }
        }
        Ok(out)
    }
}
