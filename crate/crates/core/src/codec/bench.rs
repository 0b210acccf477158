//! Decoder accuracy on cleanly rendered Gaussians at random sub-pixel
//! centers.

use crate::codec::{decode, encode_gaussian, Decoder, GaussianSpec, LandmarkSet};
use crate::error::{invalid, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub decoder: Decoder,
    pub stride: usize,
    pub sigma: f64,
    pub samples: usize,
    pub mean_px: f64,
    pub max_px: f64,
}

/// Square frame for one bench case: heatmap side and the interior interval
/// (input pixels) from which centers are drawn, keeping the whole
/// truncated Gaussian plus one heatmap pixel inside the map.
fn frame(stride: usize, spec: &GaussianSpec) -> (usize, f64, f64) {
    let s = stride as f64;
    let reach = spec.truncation * spec.sigma + s;
    let side = (2.0 * reach / s).ceil() as usize + 16;
    let last = (side - 1) as f64 * s;
    (side, reach, last - reach)
}

/// Radial errors (input pixels) of `decoder` on `n` rendered Gaussians.
/// The centers depend only on `rng`, so equal seeds give every decoder the
/// same cases.
pub fn decode_errors(
    decoder: Decoder,
    stride: usize,
    spec: &GaussianSpec,
    modulated: bool,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if stride == 0 || n == 0 {
        return Err(invalid!("decode bench needs stride > 0 and samples > 0"));
    }
    spec.validate()?;
    let (side, lo, hi) = frame(stride, spec);
    let s = stride as f64;
    let mut errors = Vec::with_capacity(n);
    for _ in 0..n {
        let c = [rng.uniform_in(lo, hi), rng.uniform_in(lo, hi)];
        let enc = encode_gaussian::<f64>(&LandmarkSet::new(vec![c]), spec, side, side, [s, s])?;
        let d = decode(&enc.heatmaps, decoder, spec, modulated);
        let [x, y] = d.landmarks.points[0];
        errors.push((x - c[0]).hypot(y - c[1]));
    }
    Ok(errors)
}

/// One cell per `(decoder, stride, sigma)`, decoders sharing the centers of
/// their `(stride, sigma)` pair.
pub fn decode_bench(
    decoders: &[Decoder],
    strides: &[usize],
    sigmas: &[f64],
    modulated: bool,
    n: usize,
    seed: u64,
) -> Result<Vec<BenchCell>> {
    let root = SeededRng::new(seed);
    let mut cells = Vec::new();
    for (si, &stride) in strides.iter().enumerate() {
        for (gi, &sigma) in sigmas.iter().enumerate() {
            let spec = GaussianSpec::with_sigma(sigma);
            for &decoder in decoders {
                let mut rng = root.fork((si * sigmas.len() + gi) as u64);
                let e = decode_errors(decoder, stride, &spec, modulated, n, &mut rng)?;
                let mut sorted = e.clone();
                sorted.sort_by(f64::total_cmp);
                cells.push(BenchCell {
                    decoder,
                    stride,
                    sigma,
                    samples: n,
                    mean_px: sorted.iter().sum::<f64>() / n as f64,
                    max_px: sorted[n - 1],
                });
            }
        }
    }
    Ok(cells)
}
