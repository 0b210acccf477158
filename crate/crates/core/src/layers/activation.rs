use crate::error::{Error, Result};
use crate::layers::Phase;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

const GELU_C: f64 = 0.044715;

/// Tanh-approximated GELU.
#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + (k * (x + T::of(GELU_C) * x * x * x)).tanh())
}

#[inline]
fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let c = T::of(GELU_C);
    let half = T::of(0.5);
    let u = k * (x + c * x * x * x);
    let t = u.tanh();
    let du = k * (T::one() + T::of(3.0) * c * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

pub fn gelu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(gelu_scalar)
}

pub fn gelu_backward<T: Scalar>(x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    x.zip_map(grad_out, |v, g| g * gelu_grad_scalar(v))
}

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| v.max(T::zero()))
}

/// Subgradient at 0 is 0.
pub fn relu_backward<T: Scalar>(x: &Tensor4<T>, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Identity,
    Relu,
    Gelu,
}

/// Stateful activation that keeps its input for backward.
#[derive(Debug, Clone)]
pub struct Activation<T> {
    pub kind: Act,
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> Activation<T> {
    pub fn new(kind: Act) -> Self {
        Self { kind, input: None }
    }

    pub fn forward(&mut self, x: Tensor4<T>, phase: Phase) -> Tensor4<T> {
        let y = match self.kind {
            Act::Identity => x.clone(),
            Act::Relu => relu(&x),
            Act::Gelu => gelu(&x),
        };
        self.input = (phase == Phase::Train).then_some(x);
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self.input.take().ok_or_else(|| Error::Tape("activation".into()))?;
        match self.kind {
            Act::Identity => {
                x.same_shape(grad_out)?;
                Ok(grad_out.clone())
            }
            Act::Relu => relu_backward(&x, grad_out),
            Act::Gelu => gelu_backward(&x, grad_out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(gelu_scalar(0.0f64), 0.0);
        // 0.5*3*(1 + tanh(sqrt(2/pi)*(3 + 0.044715*27)))
        let expect = 0.5 * 3.0 * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * 4.207305f64).tanh());
        assert!((gelu_scalar(3.0f64) - expect).abs() < 1e-12);
        assert!((gelu_scalar(3.0f64) - 2.9964).abs() < 1e-4);
        let r = relu(&Tensor4::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap());
        assert_eq!(r.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_subgradient_at_zero() {
        let x = Tensor4::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        let g = relu_backward(&x, &Tensor4::full([1, 1, 1, 3], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }
}
