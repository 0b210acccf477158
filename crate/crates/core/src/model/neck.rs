//! Top-down fusion: `M_i = Fuse(F_i, M_{i+1})`.
//!
//! F_i passes through a conv block while M_{i+1} is upsampled 2x; the two
//! are concatenated and sent through a pointwise block, two
//! depthwise/BN/pointwise/GELU modules, and a final pointwise conv.

use crate::error::{shape_err, Result};
use crate::layers::{
    upsample_bilinear2x, upsample_bilinear2x_backward, Act, Block, Conv2d, HasParams, ParamMut, ParamRef, Phase,
};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::{concat_channels, split_channels, Shape4, Tensor4};

#[derive(Debug, Clone)]
struct SeparableModule<T> {
    depthwise: Block<T>,
    pointwise: Block<T>,
}

#[derive(Debug, Clone)]
pub struct Fuse<T> {
    lateral: Block<T>,
    merge: Block<T>,
    separable: [SeparableModule<T>; 2],
    out: Block<T>,
    width: usize,
    upper_shape: Option<Shape4>,
}

impl<T: Scalar> Fuse<T> {
    /// `feat_c`: channels of F_i; `upper_c`: channels of M_{i+1}.
    pub fn new(feat_c: usize, upper_c: usize, width: usize, lateral_kernel: usize, rng: &mut SeededRng) -> Result<Self> {
        let sep = |rng: &mut SeededRng| -> Result<SeparableModule<T>> {
            Ok(SeparableModule {
                depthwise: Block::new(Conv2d::kaiming(width, width, 3, 1, 1, width, rng)?, true, Act::Identity),
                pointwise: Block::new(Conv2d::kaiming(width, width, 1, 1, 0, 1, rng)?, false, Act::Gelu),
            })
        };
        Ok(Self {
            lateral: Block::new(
                Conv2d::kaiming(feat_c, width, lateral_kernel, 1, lateral_kernel / 2, 1, rng)?,
                true,
                Act::Relu,
            ),
            merge: Block::new(Conv2d::kaiming(width + upper_c, width, 1, 1, 0, 1, rng)?, true, Act::Gelu),
            separable: [sep(rng)?, sep(rng)?],
            out: Block::new(Conv2d::kaiming(width, width, 1, 1, 0, 1, rng)?, false, Act::Identity),
            width,
            upper_shape: None,
        })
    }

    pub fn forward(&mut self, feat: &Tensor4<T>, upper: &Tensor4<T>, phase: Phase) -> Result<Tensor4<T>> {
        let (fs, us) = (feat.shape(), upper.shape());
        if fs.n != us.n || fs.h != 2 * us.h || fs.w != 2 * us.w {
            return Err(shape_err!("fuse: upper map {us} must be half the size of feature {fs}"));
        }
        let lat = self.lateral.forward(feat, phase)?;
        let up = upsample_bilinear2x(upper)?;
        let mut x = self.merge.forward(&concat_channels(&lat, &up)?, phase)?;
        for m in &mut self.separable {
            x = m.depthwise.forward(&x, phase)?;
            x = m.pointwise.forward(&x, phase)?;
        }
        self.upper_shape = Some(us);
        self.out.forward(&x, phase)
    }

    /// Returns gradients with respect to `(feat, upper)`.
    pub fn backward(&mut self, grad: &Tensor4<T>) -> Result<(Tensor4<T>, Tensor4<T>)> {
        let mut g = self.out.backward(grad)?;
        for m in self.separable.iter_mut().rev() {
            g = m.pointwise.backward(&g)?;
            g = m.depthwise.backward(&g)?;
        }
        let g = self.merge.backward(&g)?;
        let (g_lat, g_up) = split_channels(&g, self.width)?;
        let upper_shape = self.upper_shape.ok_or_else(|| crate::Error::Tape("fuse".into()))?;
        let g_upper = upsample_bilinear2x_backward(&g_up, upper_shape)?;
        let g_feat = self.lateral.backward(&g_lat)?;
        Ok((g_feat, g_upper))
    }
}

impl<T: Scalar> HasParams<T> for Fuse<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        self.lateral.params(&format!("{prefix}.lateral"), out);
        self.merge.params(&format!("{prefix}.merge"), out);
        for (i, m) in self.separable.iter().enumerate() {
            m.depthwise.params(&format!("{prefix}.sep{i}.dw"), out);
            m.pointwise.params(&format!("{prefix}.sep{i}.pw"), out);
        }
        self.out.params(&format!("{prefix}.out"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, T>>) {
        self.lateral.params_mut(&format!("{prefix}.lateral"), out);
        self.merge.params_mut(&format!("{prefix}.merge"), out);
        for (i, m) in self.separable.iter_mut().enumerate() {
            m.depthwise.params_mut(&format!("{prefix}.sep{i}.dw"), out);
            m.pointwise.params_mut(&format!("{prefix}.sep{i}.pw"), out);
        }
        self.out.params_mut(&format!("{prefix}.out"), out);
    }
}
