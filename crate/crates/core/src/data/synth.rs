//! Synthetic toy dataset: square grayscale images carrying one small,
//! visually distinct pattern per landmark, centered at a continuous
//! sub-pixel position.

use std::path::Path;

use serde::Serialize;

use crate::codec::LandmarkSet;
use crate::data::{AnnotationFile, Dataset, GrayImage, Sample, SampleRecord, SCHEMA_VERSION};
use crate::error::{invalid, Error, Result};
use crate::rng::SeededRng;

pub const BACKGROUND: f64 = 0.15;
pub const FOREGROUND: f64 = 0.85;
pub const NOISE_STD: f64 = 0.02;
const SUPERSAMPLE: usize = 4;
const PLACEMENT_ATTEMPTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_landmarks: usize,
    pub size: usize,
    pub seed: u64,
    pub margin: f64,
    pub pixel_spacing_mm: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_val: 50,
            n_landmarks: 4,
            size: 128,
            seed: 0,
            margin: 16.0,
            pixel_spacing_mm: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Disc,
    Ring,
    Plus,
    HollowSquare,
}

impl Pattern {
    pub fn for_landmark(j: usize) -> (Pattern, f64) {
        let kind = match j % 4 {
            0 => Pattern::Disc,
            1 => Pattern::Ring,
            2 => Pattern::Plus,
            _ => Pattern::HollowSquare,
        };
        (kind, 4.5 + 1.5 * (j / 4) as f64)
    }

    /// Indicator of the shape at offset `(dx, dy)` from its center.
    fn covers(self, radius: f64, dx: f64, dy: f64) -> bool {
        let (ax, ay) = (dx.abs(), dy.abs());
        match self {
            Pattern::Disc => dx * dx + dy * dy <= radius * radius,
            Pattern::Ring => {
                let d = (dx * dx + dy * dy).sqrt();
                d <= radius && d >= radius - 2.0
            }
            Pattern::Plus => (ax <= 1.5 && ay <= radius) || (ay <= 1.5 && ax <= radius),
            Pattern::HollowSquare => {
                let m = ax.max(ay);
                m <= radius && m >= radius - 2.0
            }
        }
    }
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Renders the patterns with 4x4 supersampled area coverage on a noisy
/// background. Pixel values are quantized to 8 bits so the in-memory image
/// equals its PGM roundtrip.
pub fn render(size: usize, centers: &[[f64; 2]], rng: &mut SeededRng) -> GrayImage {
    let mut coverage = vec![0.0f64; size * size];
    let inv = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for (j, &[cx, cy]) in centers.iter().enumerate() {
        let (pattern, r) = Pattern::for_landmark(j);
        let x0 = (cx - r - 1.0).floor().max(0.0) as usize;
        let y0 = (cy - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((cx + r + 1.0).ceil() as usize).min(size - 1);
        let y1 = ((cy + r + 1.0).ceil() as usize).min(size - 1);
        for py in y0..=y1 {
            for px in x0..=x1 {
                let mut hits = 0usize;
                for sy in 0..SUPERSAMPLE {
                    let oy = (sy as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                    for sx in 0..SUPERSAMPLE {
                        let ox = (sx as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                        if pattern.covers(r, px as f64 + ox - cx, py as f64 + oy - cy) {
                            hits += 1;
                        }
                    }
                }
                let c = &mut coverage[py * size + px];
                *c = (*c + hits as f64 * inv).min(1.0);
            }
        }
    }
    let pixels = coverage
        .into_iter()
        .map(|c| quantize(BACKGROUND + (FOREGROUND - BACKGROUND) * c + NOISE_STD * rng.normal()))
        .collect();
    GrayImage {
        width: size,
        height: size,
        pixels,
    }
}

/// Minimum center distance that keeps every pair of patterns apart.
fn min_separation(n_landmarks: usize) -> f64 {
    let r_max = (0..n_landmarks).map(|j| Pattern::for_landmark(j).1).fold(0.0, f64::max);
    2.0 * r_max + 8.0
}

fn place(cfg: &SynthConfig, rng: &mut SeededRng) -> Result<Vec<[f64; 2]>> {
    let lo = cfg.margin;
    let hi = (cfg.size - 1) as f64 - cfg.margin;
    let sep = min_separation(cfg.n_landmarks);
    for _ in 0..PLACEMENT_ATTEMPTS {
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(cfg.n_landmarks);
        let mut ok = true;
        for _ in 0..cfg.n_landmarks {
            let p = [rng.uniform_in(lo, hi), rng.uniform_in(lo, hi)];
            if pts.iter().any(|q| (p[0] - q[0]).hypot(p[1] - q[1]) < sep) {
                ok = false;
                break;
            }
            pts.push(p);
        }
        if ok {
            return Ok(pts);
        }
    }
    Err(Error::Data(format!(
        "could not place {} non-overlapping patterns (separation {sep:.1} px) in a {}x{} image with margin {} after {PLACEMENT_ATTEMPTS} attempts",
        cfg.n_landmarks, cfg.size, cfg.size, cfg.margin
    )))
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_landmarks == 0 {
            return Err(invalid!("n_landmarks must be positive"));
        }
        if (self.size as f64) < 2.0 * self.margin + 2.0 {
            return Err(invalid!("image size {} too small for margin {}", self.size, self.margin));
        }
        if !(self.pixel_spacing_mm > 0.0) {
            return Err(invalid!("pixel spacing must be positive"));
        }
        Ok(())
    }

    fn split(&self, name: &str, count: usize, stream_base: u64) -> Result<Dataset> {
        let root = SeededRng::new(self.seed);
        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            let mut rng = root.fork(stream_base + i as u64);
            let centers = place(self, &mut rng)?;
            let image = render(self.size, &centers, &mut rng);
            samples.push(Sample {
                id: format!("images/{name}_{i:04}.pgm"),
                image,
                landmarks: LandmarkSet::new(centers),
                pixel_spacing_mm: self.pixel_spacing_mm,
            });
        }
        Dataset::new(self.n_landmarks, samples)
    }

    /// Builds the train and validation splits in memory.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        Ok((self.split("train", self.n_train, 0)?, self.split("val", self.n_val, 1 << 32)?))
    }
}

/// Annotation document for an in-memory dataset whose sample ids are the
/// relative image paths.
pub fn annotation_for(ds: &Dataset) -> AnnotationFile {
    AnnotationFile {
        schema_version: SCHEMA_VERSION,
        num_landmarks: ds.num_landmarks,
        samples: ds
            .samples
            .iter()
            .map(|s| SampleRecord {
                image_path: s.id.clone(),
                width: s.image.width,
                height: s.image.height,
                pixel_spacing_mm: s.pixel_spacing_mm,
                landmarks: s.landmarks.points.clone(),
                visible: s.landmarks.visible.clone(),
            })
            .collect(),
    }
}

/// Writes `images/*.pgm`, `train.json` and, when non-empty, `val.json`.
pub fn write_dataset(dir: &Path, train: &Dataset, val: &Dataset) -> Result<()> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    for (name, ds) in [("train", train), ("val", val)] {
        if ds.is_empty() && name == "val" {
            continue;
        }
        for s in &ds.samples {
            s.image.save_pgm(dir.join(&s.id))?;
        }
        annotation_for(ds).write(dir.join(format!("{name}.json")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 3,
            n_val: 2,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_and_within_margin() {
        let (a, va) = small().generate().unwrap();
        let (b, _) = small().generate().unwrap();
        assert_eq!(va.len(), 2);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.landmarks, y.landmarks);
            for p in &x.landmarks.points {
                for v in p {
                    assert!((16.0..=111.0).contains(v));
                }
            }
        }
    }

    #[test]
    fn pattern_centroid_matches_annotation() {
        let (ds, _) = SynthConfig { n_train: 5, ..small() }.generate().unwrap();
        for s in &ds.samples {
            for (j, &[cx, cy]) in s.landmarks.points.iter().enumerate() {
                let r = Pattern::for_landmark(j).1 + 2.0;
                let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
                let (x0, x1) = ((cx - r).floor() as usize, (cx + r).ceil() as usize);
                let (y0, y1) = ((cy - r).floor() as usize, (cy + r).ceil() as usize);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let v = s.image.get(x, y) - BACKGROUND;
                        m += v;
                        mx += v * x as f64;
                        my += v * y as f64;
                    }
                }
                let err = (mx / m - cx).hypot(my / m - cy);
                assert!(err < 0.3, "landmark {j}: centroid off by {err}");
            }
        }
    }

    #[test]
    fn impossible_packing_fails() {
        let cfg = SynthConfig {
            n_landmarks: 40,
            size: 64,
            ..small()
        };
        assert!(matches!(cfg.generate(), Err(Error::Data(_))));
    }

    #[test]
    fn disk_roundtrip_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let (train, val) = small().generate().unwrap();
        write_dataset(dir.path(), &train, &val).unwrap();
        let loaded = Dataset::load(dir.path().join("train.json")).unwrap();
        for (a, b) in train.samples.iter().zip(&loaded.samples) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.landmarks, b.landmarks);
        }
        let text = std::fs::read_to_string(dir.path().join("val.json")).unwrap();
        assert_eq!(AnnotationFile::from_json(&text).unwrap().to_json(), text);
    }
}
