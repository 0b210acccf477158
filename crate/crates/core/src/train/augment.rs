//! Input preparation: unbiased resize to the network input, optional
//! horizontal flip and a random similarity jitter. Image and landmarks go
//! through the same affine map.

use serde::{Deserialize, Serialize};

use crate::codec::{affine_apply, make_flip_map, make_resize_map, AffineMap, LandmarkSet};
use crate::data::{GrayImage, Sample};
use crate::error::{invalid, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub flip_prob: f64,
    pub scale: [f64; 2],
    pub rotation_deg: f64,
    /// Maximum translation as a fraction of the side length.
    pub translate_frac: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            flip_prob: 0.5,
            scale: [0.75, 1.25],
            rotation_deg: 15.0,
            translate_frac: 0.05,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(invalid!("flip_prob must lie in [0, 1]"));
        }
        if !(self.scale[0] > 0.0 && self.scale[0] <= self.scale[1]) {
            return Err(invalid!("scale range {:?} must be positive and ordered", self.scale));
        }
        if !(self.rotation_deg >= 0.0 && self.translate_frac >= 0.0) {
            return Err(invalid!("rotation and translation ranges must be non-negative"));
        }
        Ok(())
    }

    /// Draws one random map in the `w x h` input frame. All five variates
    /// are drawn on every call so the random stream does not depend on the
    /// outcome of the flip.
    pub fn sample_map(&self, w: usize, h: usize, rng: &mut SeededRng) -> (AffineMap, bool) {
        let flip = rng.bernoulli(self.flip_prob);
        let scale = rng.uniform_in(self.scale[0], self.scale[1]);
        let angle = rng.uniform_in(-self.rotation_deg, self.rotation_deg).to_radians();
        let tx = rng.uniform_in(-1.0, 1.0) * self.translate_frac * w as f64;
        let ty = rng.uniform_in(-1.0, 1.0) * self.translate_frac * h as f64;
        let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
        let jitter = AffineMap::about_center(cx, cy, scale, angle, tx, ty);
        let map = if flip { jitter.after(&make_flip_map(w)) } else { jitter };
        (map, flip)
    }
}

/// A sample mapped into the network input frame.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub image: GrayImage,
    pub landmarks: LandmarkSet,
    /// Original image frame to input frame.
    pub map: AffineMap,
}

/// Resizes `sample` to `w x h`; with `augment`, applies a random flip and
/// jitter on top. When flipped, keypoint `j` of the result carries the
/// landmark `swap[j]`.
pub fn prepare(
    sample: &Sample,
    w: usize,
    h: usize,
    augment: Option<(&AugmentConfig, &mut SeededRng)>,
    swap: Option<&[usize]>,
) -> Result<Prepared> {
    let resize = make_resize_map(sample.image.width, sample.image.height, w, h)?;
    let (map, flipped) = match augment {
        Some((cfg, rng)) if cfg.enabled => {
            let (extra, flipped) = cfg.sample_map(w, h, rng);
            (extra.after(&resize), flipped)
        }
        _ => (resize, false),
    };
    let image = sample.image.warp(&map, w, h)?;
    let mut landmarks = affine_apply(&map, &sample.landmarks);
    if flipped {
        if let Some(perm) = swap {
            landmarks = LandmarkSet {
                points: perm.iter().map(|&s| landmarks.points[s]).collect(),
                visible: perm.iter().map(|&s| landmarks.visible[s]).collect(),
            };
        }
    }
    landmarks.clip_visibility(w, h);
    Ok(Prepared { image, landmarks, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_dark, encode_gaussian, GaussianSpec, HeatmapStack};

    fn sample() -> Sample {
        let image = GrayImage::new(64, 48, (0..64 * 48).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        Sample {
            id: "s".into(),
            image,
            landmarks: LandmarkSet::new(vec![[20.3, 17.8], [40.6, 30.1]]),
            pixel_spacing_mm: 0.1,
        }
    }

    #[test]
    fn plain_prepare_is_unbiased_resize() {
        let p = prepare(&sample(), 128, 96, None, None).unwrap();
        let sx = 127.0 / 63.0;
        assert!((p.landmarks.points[0][0] - 20.3 * sx).abs() < 1e-12);
        assert!((p.image.get(127, 95) - sample().image.get(63, 47)).abs() < 1e-12);
    }

    #[test]
    fn landmarks_follow_the_image() {
        // Render Gaussian blobs as the image, warp them, and decode: the
        // decoded peaks must land on the transformed landmarks.
        let spec = GaussianSpec::with_sigma(3.0);
        let pts = LandmarkSet::new(vec![[30.2, 33.7], [70.9, 61.4]]);
        let enc = encode_gaussian::<f64>(&pts, &spec, 96, 96, [1.0, 1.0]).unwrap();
        let mut pixels = vec![0.0; 96 * 96];
        for j in 0..2 {
            for (p, v) in pixels.iter_mut().zip(enc.heatmaps.map(j)) {
                *p += v;
            }
        }
        let s = Sample {
            id: "g".into(),
            image: GrayImage::new(96, 96, pixels).unwrap(),
            landmarks: pts,
            pixel_spacing_mm: 0.1,
        };
        let cfg = AugmentConfig {
            flip_prob: 1.0,
            ..AugmentConfig::default()
        };
        let mut rng = SeededRng::new(5);
        for _ in 0..5 {
            let p = prepare(&s, 96, 96, Some((&cfg, &mut rng)), None).unwrap();
            for j in 0..2 {
                let mut maps = crate::tensor::Tensor4::<f64>::zeros([1, 1, 96, 96]);
                let [x, y] = p.landmarks.points[j];
                for yy in 0..96 {
                    for xx in 0..96 {
                        let near = (xx as f64 - x).hypot(yy as f64 - y) < 8.0;
                        maps.set(0, 0, yy, xx, if near { p.image.get(xx, yy) } else { 0.0 });
                    }
                }
                let hm = HeatmapStack::new(maps, [1.0, 1.0]).unwrap();
                let d = decode_dark(&hm, &spec, false);
                let [dx, dy] = d.landmarks.points[0];
                assert!((dx - x).hypot(dy - y) < 0.35, "landmark {j}: ({dx},{dy}) vs ({x},{y})");
            }
        }
    }

    #[test]
    fn flip_applies_swap() {
        let cfg = AugmentConfig {
            flip_prob: 1.0,
            scale: [1.0, 1.0],
            rotation_deg: 0.0,
            translate_frac: 0.0,
            enabled: true,
        };
        let s = sample();
        let mut rng = SeededRng::new(1);
        let p = prepare(&s, 64, 48, Some((&cfg, &mut rng)), Some(&[1, 0])).unwrap();
        assert!((p.landmarks.points[0][0] - (63.0 - 40.6)).abs() < 1e-12);
        assert!((p.landmarks.points[1][1] - 17.8).abs() < 1e-12);
    }
}
