use crate::scalar::Scalar;
use crate::tensor::{Shape4, Tensor4};

/// A learnable array with its gradient accumulator. Non-trainable buffers
/// (batch-norm running statistics) reuse the type with `trainable = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor4<T>,
    pub grad: Tensor4<T>,
    pub trainable: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor4<T>) -> Self {
        let grad = Tensor4::zeros_like(&value);
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(value: Tensor4<T>) -> Self {
        Self {
            trainable: false,
            ..Self::new(value)
        }
    }

    pub fn shape(&self) -> Shape4 {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

pub type ParamRef<'a, T> = (String, &'a Param<T>);
pub type ParamMut<'a, T> = (String, &'a mut Param<T>);

/// Enumerates parameters under stable dotted paths, in a fixed order.
pub trait HasParams<T: Scalar> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>);
    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, T>>);

    fn zero_grads(&mut self) {
        let mut all = Vec::new();
        self.params_mut("", &mut all);
        for (_, p) in all {
            p.zero_grad();
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
