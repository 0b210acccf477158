use crate::error::Result;
use crate::layers::activation::{Act, Activation};
use crate::layers::batchnorm::BatchNorm2d;
use crate::layers::conv::Conv2d;
use crate::layers::param::{join, HasParams, ParamMut, ParamRef};
use crate::layers::Phase;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

/// Convolution, optional batch norm, activation.
#[derive(Debug, Clone)]
pub struct Block<T> {
    pub conv: Conv2d<T>,
    pub bn: Option<BatchNorm2d<T>>,
    pub act: Activation<T>,
}

impl<T: Scalar> Block<T> {
    pub fn new(conv: Conv2d<T>, with_bn: bool, act: Act) -> Self {
        let bn = with_bn.then(|| BatchNorm2d::new(conv.p.out_channels()));
        Self {
            conv,
            bn,
            act: Activation::new(act),
        }
    }

    pub fn forward(&mut self, x: &Tensor4<T>, phase: Phase) -> Result<Tensor4<T>> {
        let mut y = self.conv.forward(x, phase)?;
        if let Some(bn) = &mut self.bn {
            y = bn.forward(&y, phase)?;
        }
        Ok(self.act.forward(y, phase))
    }

    pub fn backward(&mut self, grad: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut g = self.act.backward(grad)?;
        if let Some(bn) = &mut self.bn {
            g = bn.backward(&g)?;
        }
        self.conv.backward(&g)
    }
}

impl<T: Scalar> HasParams<T> for Block<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        self.conv.params(&join(prefix, "conv"), out);
        if let Some(bn) = &self.bn {
            bn.params(&join(prefix, "bn"), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, T>>) {
        self.conv.params_mut(&join(prefix, "conv"), out);
        if let Some(bn) = &mut self.bn {
            bn.params_mut(&join(prefix, "bn"), out);
        }
    }
}
