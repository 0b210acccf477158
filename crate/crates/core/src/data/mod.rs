//! On-disk formats and the synthetic toy dataset.

mod dataset;
mod image;
pub mod synth;

pub use dataset::{AnnotationFile, Dataset, Sample, SampleRecord, SCHEMA_VERSION};
pub use image::GrayImage;
pub use synth::SynthConfig;
