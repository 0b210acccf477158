//! Plain strided-conv pyramid producing F2..F5 at strides 4, 8, 16, 32.

use crate::error::{shape_err, Result};
use crate::layers::{Act, Block, Conv2d, HasParams, ParamMut, ParamRef, Phase};
use crate::model::config::BackboneConfig;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

#[derive(Debug, Clone)]
pub struct Backbone<T> {
    pub cfg: BackboneConfig,
    stem: [Block<T>; 2],
    stages: [Block<T>; 3],
}

fn down<T: Scalar>(cin: usize, cout: usize, rng: &mut SeededRng) -> Result<Block<T>> {
    Ok(Block::new(Conv2d::kaiming(cin, cout, 3, 2, 1, 1, rng)?, true, Act::Relu))
}

impl<T: Scalar> Backbone<T> {
    pub fn new(cfg: &BackboneConfig, rng: &mut SeededRng) -> Result<Self> {
        let c = cfg.stage_channels;
        Ok(Self {
            cfg: cfg.clone(),
            stem: [down(cfg.in_channels, cfg.stem_channels, rng)?, down(cfg.stem_channels, c[0], rng)?],
            stages: [down(c[0], c[1], rng)?, down(c[1], c[2], rng)?, down(c[2], c[3], rng)?],
        })
    }

    /// Returns `[F2, F3, F4, F5]`.
    pub fn forward(&mut self, image: &Tensor4<T>, phase: Phase) -> Result<[Tensor4<T>; 4]> {
        let s = image.shape();
        if s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 || s.w == 0 {
            return Err(shape_err!("backbone input {s} must have spatial dims divisible by 32"));
        }
        if s.c != self.cfg.in_channels {
            return Err(shape_err!("backbone expects {} input channels, got {s}", self.cfg.in_channels));
        }
        let x = self.stem[0].forward(image, phase)?;
        let f2 = self.stem[1].forward(&x, phase)?;
        let f3 = self.stages[0].forward(&f2, phase)?;
        let f4 = self.stages[1].forward(&f3, phase)?;
        let f5 = self.stages[2].forward(&f4, phase)?;
        Ok([f2, f3, f4, f5])
    }

    /// Takes the gradient reaching each of F2..F5; returns the image gradient.
    pub fn backward(&mut self, grads: [Tensor4<T>; 4]) -> Result<Tensor4<T>> {
        let [g2, g3, g4, g5] = grads;
        let mut g = self.stages[2].backward(&g5)?;
        g.add_assign(&g4)?;
        let mut g = self.stages[1].backward(&g)?;
        g.add_assign(&g3)?;
        let mut g = self.stages[0].backward(&g)?;
        g.add_assign(&g2)?;
        let g = self.stem[1].backward(&g)?;
        self.stem[0].backward(&g)
    }
}

impl<T: Scalar> HasParams<T> for Backbone<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        for (i, b) in self.stem.iter().enumerate() {
            b.params(&format!("{prefix}.stem{i}"), out);
        }
        for (i, b) in self.stages.iter().enumerate() {
            b.params(&format!("{prefix}.stage{}", i + 3), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, T>>) {
        for (i, b) in self.stem.iter_mut().enumerate() {
            b.params_mut(&format!("{prefix}.stem{i}"), out);
        }
        for (i, b) in self.stages.iter_mut().enumerate() {
            b.params_mut(&format!("{prefix}.stage{}", i + 3), out);
        }
    }
}
