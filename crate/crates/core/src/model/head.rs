//! Super-resolution keypoint head: pointwise encoder + ReLU gives one
//! channel per keypoint, a per-keypoint large-kernel conv expands each into
//! `s^2` low-resolution maps, and pixel shuffle assembles them into one
//! `s`-times larger heatmap per keypoint.

use crate::error::Result;
use crate::layers::{pixel_shuffle, pixel_unshuffle, Act, Block, Conv2d, HasParams, ParamMut, ParamRef, Phase};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Initial weight standard deviation of the large-kernel output conv.
pub const LKC_INIT_STD: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SrHead<T> {
    encoder: Block<T>,
    /// Grouped conv with `groups = N`: group j maps K^j to its own `s^2` maps.
    pub lkc: Conv2d<T>,
    upscale: usize,
}

impl<T: Scalar> SrHead<T> {
    pub fn new(in_c: usize, keypoints: usize, upscale: usize, kernel: usize, rng: &mut SeededRng) -> Result<Self> {
        let s2 = upscale * upscale;
        let encoder = Block::new(Conv2d::kaiming(in_c, keypoints, 1, 1, 0, 1, rng)?, false, Act::Relu);
        let mut lkc = Conv2d::kaiming(keypoints, keypoints * s2, kernel, 1, kernel / 2, keypoints, rng)?;
        // The output layer starts near zero (std LKC_INIT_STD). With the
        // full Kaiming scale the first updates drive every encoder unit
        // below zero and the dead ReLU pins the heatmaps at a constant.
        let kaiming_std = (2.0 / (kernel * kernel) as f64).sqrt();
        let w = &mut lkc.p.weight.value;
        *w = w.scale(T::of(LKC_INIT_STD / kaiming_std));
        Ok(Self { encoder, lkc, upscale })
    }

    pub fn upscale(&self) -> usize {
        self.upscale
    }

    pub fn forward(&mut self, fused: &Tensor4<T>, phase: Phase) -> Result<Tensor4<T>> {
        let k = self.encoder.forward(fused, phase)?;
        let low = self.lkc.forward(&k, phase)?;
        pixel_shuffle(&low, self.upscale)
    }

    pub fn backward(&mut self, grad: &Tensor4<T>) -> Result<Tensor4<T>> {
        let g = pixel_unshuffle(grad, self.upscale)?;
        let g = self.lkc.backward(&g)?;
        self.encoder.backward(&g)
    }
}

impl<T: Scalar> HasParams<T> for SrHead<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        self.encoder.params(&format!("{prefix}.encoder"), out);
        self.lkc.params(&format!("{prefix}.lkc"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, T>>) {
        self.encoder.params_mut(&format!("{prefix}.encoder"), out);
        self.lkc.params_mut(&format!("{prefix}.lkc"), out);
    }
}
