use serde::{Deserialize, Serialize};

use crate::codec::{HeatmapStack, LandmarkSet};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Gaussian target parameters. `sigma` is measured in input-frame pixels
/// and divided by the heatmap stride when rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianSpec {
    pub sigma: f64,
    pub amplitude: f64,
    /// Values farther than `truncation * sigma` from the center are zero.
    pub truncation: f64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            sigma: 6.0,
            amplitude: 1.0,
            truncation: 3.0,
        }
    }
}

impl GaussianSpec {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.truncation > 0.0) {
            return Err(invalid!("truncation must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Encoded<T> {
    pub heatmaps: HeatmapStack<T>,
    /// Keypoints that were visible but fell outside the input frame; their
    /// maps are all zero.
    pub out_of_frame: Vec<usize>,
}

fn render<T: Scalar>(
    landmarks: &LandmarkSet,
    spec: &GaussianSpec,
    h: usize,
    w: usize,
    stride: [f64; 2],
    quantize: bool,
) -> Result<Encoded<T>> {
    spec.validate()?;
    if h == 0 || w == 0 || !(stride[0] > 0.0 && stride[1] > 0.0) {
        return Err(invalid!("heatmap size {h}x{w} with stride {stride:?}"));
    }
    let n = landmarks.len();
    let mut maps = Tensor4::zeros([1, n, h, w]);
    let mut out_of_frame = Vec::new();
    let (sx, sy) = (spec.sigma / stride[0], spec.sigma / stride[1]);
    let limit = spec.truncation * spec.truncation;
    let max_x = (w - 1) as f64 * stride[0];
    let max_y = (h - 1) as f64 * stride[1];
    for j in 0..n {
        if !landmarks.visible[j] {
            continue;
        }
        let [x, y] = landmarks.points[j];
        if !(x >= 0.0 && y >= 0.0 && x <= max_x + 1e-9 && y <= max_y + 1e-9) {
            out_of_frame.push(j);
            continue;
        }
        let (mut mx, mut my) = (x / stride[0], y / stride[1]);
        if quantize {
            mx = mx.round();
            my = my.round();
        }
        let plane = maps.plane_mut(0, j);
        let x0 = (mx - spec.truncation * sx).floor().max(0.0) as usize;
        let x1 = ((mx + spec.truncation * sx).ceil() as usize).min(w - 1);
        let y0 = (my - spec.truncation * sy).floor().max(0.0) as usize;
        let y1 = ((my + spec.truncation * sy).ceil() as usize).min(h - 1);
        for py in y0..=y1 {
            let dy = (py as f64 - my) / sy;
            for px in x0..=x1 {
                let dx = (px as f64 - mx) / sx;
                let d2 = dx * dx + dy * dy;
                if d2 <= limit {
                    plane[py * w + px] = T::of(spec.amplitude * (-0.5 * d2).exp());
                }
            }
        }
    }
    Ok(Encoded {
        heatmaps: HeatmapStack::new(maps, stride)?,
        out_of_frame,
    })
}

/// Renders one Gaussian per visible landmark centered at its exact
/// (unquantized) heatmap-frame position `input / stride`.
pub fn encode_gaussian<T: Scalar>(
    landmarks: &LandmarkSet,
    spec: &GaussianSpec,
    h: usize,
    w: usize,
    stride: [f64; 2],
) -> Result<Encoded<T>> {
    render(landmarks, spec, h, w, stride, false)
}

/// Baseline encoder that first rounds each center to the nearest grid point.
pub fn encode_gaussian_quantized<T: Scalar>(
    landmarks: &LandmarkSet,
    spec: &GaussianSpec,
    h: usize,
    w: usize,
    stride: [f64; 2],
) -> Result<Encoded<T>> {
    render(landmarks, spec, h, w, stride, true)
}
