use crate::error::{invalid, Result};
use crate::rng::SeededRng;

/// Mean distance from a uniform point in a unit cell to its nearest corner:
/// `(sqrt(2) + asinh(1)) / 6`.
pub const UNIT_CELL_MEAN_DISTANCE: f64 = 0.382_597_858_232_106_2;

#[derive(Debug, Clone)]
pub struct BiasStats {
    pub stride: f64,
    pub samples: usize,
    pub mean: f64,
    pub max: f64,
    /// Counts over `[0, stride / sqrt(2)]` in equal-width bins.
    pub histogram: Vec<u64>,
}

/// Monte-Carlo distance between uniformly placed sub-pixel positions and
/// the nearest point of a grid with spacing `stride`.
pub fn quantization_bias(stride: f64, n_samples: usize, bins: usize, rng: &mut SeededRng) -> Result<BiasStats> {
    if !(stride > 0.0 && stride.is_finite()) || n_samples == 0 {
        return Err(invalid!("quantization_bias needs stride > 0 and samples > 0"));
    }
    let max_possible = stride / std::f64::consts::SQRT_2;
    let mut histogram = vec![0u64; bins];
    let (mut sum, mut max) = (0.0, 0.0f64);
    for _ in 0..n_samples {
        let u = rng.uniform() * stride;
        let v = rng.uniform() * stride;
        let dx = u.min(stride - u);
        let dy = v.min(stride - v);
        let d = (dx * dx + dy * dy).sqrt();
        sum += d;
        max = max.max(d);
        if bins > 0 {
            let b = ((d / max_possible) * bins as f64) as usize;
            histogram[b.min(bins - 1)] += 1;
        }
    }
    Ok(BiasStats {
        stride,
        samples: n_samples,
        mean: sum / n_samples as f64,
        max,
        histogram,
    })
}
