//! Coordinate/heatmap conversion under the unbiased convention: pixel
//! centers sit at integer coordinates and every resize maps first-to-first
//! and last-to-last pixel center (scale `(dst - 1) / (src - 1)`).

mod bench;
mod bias;
mod decode;
mod encode;
mod flip;
mod geometry;

pub use bench::{decode_bench, decode_errors, BenchCell};
pub use bias::{quantization_bias, BiasStats, UNIT_CELL_MEAN_DISTANCE};
pub use decode::{decode, decode_argmax, decode_dark, decode_shifted, Decoded, Decoder, KeypointNote};
pub use encode::{encode_gaussian, encode_gaussian_quantized, Encoded, GaussianSpec};
pub use flip::{ensemble_average, flip_average};
pub use geometry::{affine_apply, make_flip_map, make_resize_map, AffineMap, LandmarkSet};

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Per-keypoint heatmaps `(1, N, h, w)` together with the per-axis ratio
/// between input-frame and heatmap-frame coordinates: `input = heatmap * stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack<T> {
    pub maps: Tensor4<T>,
    /// `[x, y]`
    pub stride: [f64; 2],
}

/// `(input_len - 1) / (map_len - 1)`; a 1-pixel axis gets stride 1.
pub fn unbiased_stride(input_len: usize, map_len: usize) -> f64 {
    if map_len <= 1 || input_len <= 1 {
        1.0
    } else {
        (input_len - 1) as f64 / (map_len - 1) as f64
    }
}

impl<T: Scalar> HeatmapStack<T> {
    pub fn new(maps: Tensor4<T>, stride: [f64; 2]) -> Result<Self> {
        if maps.shape().n != 1 {
            return Err(shape_err!("heatmap stack must hold one image, got {}", maps.shape()));
        }
        Ok(Self { maps, stride })
    }

    /// Stack whose last pixel center maps onto the last input pixel center.
    pub fn for_input(maps: Tensor4<T>, input_w: usize, input_h: usize) -> Result<Self> {
        let s = maps.shape();
        Self::new(maps, [unbiased_stride(input_w, s.w), unbiased_stride(input_h, s.h)])
    }

    pub fn num_keypoints(&self) -> usize {
        self.maps.shape().c
    }

    pub fn size(&self) -> (usize, usize) {
        (self.maps.shape().h, self.maps.shape().w)
    }

    pub fn map(&self, j: usize) -> &[T] {
        self.maps.plane(0, j)
    }

    pub fn to_input(&self, hx: f64, hy: f64) -> [f64; 2] {
        [hx * self.stride[0], hy * self.stride[1]]
    }

    pub fn to_heatmap(&self, x: f64, y: f64) -> [f64; 2] {
        [x / self.stride[0], y / self.stride[1]]
    }
}
