//! Annotation documents and in-memory datasets.
//!
//! One JSON document per split lists the schema version, the landmark
//! count and every sample record. Image paths are relative to the
//! document's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::LandmarkSet;
use crate::data::GrayImage;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub image_path: String,
    pub width: usize,
    pub height: usize,
    pub pixel_spacing_mm: f64,
    /// `(x, y)` in original-image pixel coordinates.
    pub landmarks: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub schema_version: u32,
    pub num_landmarks: usize,
    pub samples: Vec<SampleRecord>,
}

impl AnnotationFile {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.landmarks.len() != self.num_landmarks || s.visible.len() != self.num_landmarks {
                return Err(Error::Data(format!(
                    "sample {i} ({}) has {} landmarks / {} flags, expected {}",
                    s.image_path,
                    s.landmarks.len(),
                    s.visible.len(),
                    self.num_landmarks
                )));
            }
            if !(s.pixel_spacing_mm > 0.0 && s.pixel_spacing_mm.is_finite()) {
                return Err(Error::Data(format!("sample {i} ({}) has non-positive pixel spacing", s.image_path)));
            }
            if s.landmarks.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("sample {i} ({}) has non-finite coordinates", s.image_path)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("annotation serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: AnnotationFile = serde_json::from_str(text).map_err(|e| Error::Format {
            what: "annotation file",
            msg: e.to_string(),
        })?;
        file.validate()?;
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    pub landmarks: LandmarkSet,
    pub pixel_spacing_mm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub num_landmarks: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(num_landmarks: usize, samples: Vec<Sample>) -> Result<Self> {
        for s in &samples {
            if s.landmarks.len() != num_landmarks {
                return Err(Error::Data(format!(
                    "sample {} has {} landmarks, expected {num_landmarks}",
                    s.id,
                    s.landmarks.len()
                )));
            }
        }
        Ok(Self { num_landmarks, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Loads an annotation document and every image it references.
    pub fn load(annotation: impl AsRef<Path>) -> Result<Self> {
        let annotation = annotation.as_ref();
        let file = AnnotationFile::read(annotation)?;
        let root = annotation.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let mut samples = Vec::with_capacity(file.samples.len());
        for rec in &file.samples {
            let image = GrayImage::load_pgm(root.join(&rec.image_path))?;
            if (image.width, image.height) != (rec.width, rec.height) {
                return Err(Error::Data(format!(
                    "{}: image is {}x{}, annotation says {}x{}",
                    rec.image_path, image.width, image.height, rec.width, rec.height
                )));
            }
            samples.push(Sample {
                id: rec.image_path.clone(),
                image,
                landmarks: LandmarkSet::with_visibility(rec.landmarks.clone(), rec.visible.clone())?,
                pixel_spacing_mm: rec.pixel_spacing_mm,
            });
        }
        Dataset::new(file.num_landmarks, samples)
    }
}
