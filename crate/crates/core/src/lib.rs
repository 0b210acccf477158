//! Heatmap-based landmark detection with a multi-scale fusion neck and a
//! pixel-shuffle super-resolution head.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the 64-bit instantiation used by the CLI and tests.

pub mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use tensor::{Shape4, Tensor4};

pub type Tensor = Tensor4<f64>;
pub type Tensor32 = Tensor4<f32>;
pub type Model = model::LandmarkNet<f64>;
pub type Model32 = model::LandmarkNet<f32>;

