use log::warn;

use crate::error::{invalid, shape_err, Error, Result};
use crate::layers::param::{join, HasParams, Param, ParamMut, ParamRef};
use crate::layers::Phase;
use crate::scalar::Scalar;
use crate::tensor::Tensor4;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor4::full([channels, 1, 1, 1], T::one())),
            beta: Param::new(Tensor4::zeros([channels, 1, 1, 1])),
            running_mean: Param::buffer(Tensor4::zeros([channels, 1, 1, 1])),
            running_var: Param::buffer(Tensor4::full([channels, 1, 1, 1], T::one())),
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.shape().n
    }
}

#[derive(Debug, Clone)]
struct BnTape<T> {
    normalized: Tensor4<T>,
    inv_std: Vec<T>,
    phase: Phase,
}

/// Per-channel batch normalization over `(n, h, w)`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub p: BatchNormParams<T>,
    tape: Option<BnTape<T>>,
    warned_default_stats: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            p: BatchNormParams::new(channels),
            tape: None,
            warned_default_stats: false,
        }
    }

    fn has_default_stats(&self) -> bool {
        self.p.running_mean.value.data().iter().all(|v| *v == T::zero())
            && self.p.running_var.value.data().iter().all(|v| *v == T::one())
    }

    /// Training phase normalizes with batch statistics and updates running
    /// statistics; eval phase uses the running statistics. `record` keeps
    /// the tape for a following [`BatchNorm2d::backward`].
    pub fn forward_with(&mut self, x: &Tensor4<T>, phase: Phase, record: bool) -> Result<Tensor4<T>> {
        let s = x.shape();
        let c = self.p.channels();
        if s.c != c {
            return Err(shape_err!("batchnorm over {c} channels got {s}"));
        }
        let count = s.n * s.plane();
        if count == 0 {
            return Err(invalid!("batchnorm over an empty batch"));
        }
        let eps = T::of(self.p.epsilon);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        match phase {
            Phase::Train => {
                let cnt = T::of(count as f64);
                for ch in 0..c {
                    let sum: T = (0..s.n).map(|n| x.plane(n, ch).iter().copied().sum::<T>()).sum();
                    let m = sum / cnt;
                    let ss: T = (0..s.n)
                        .map(|n| x.plane(n, ch).iter().map(|&v| (v - m) * (v - m)).sum::<T>())
                        .sum();
                    mean[ch] = m;
                    var[ch] = ss / cnt;
                }
                let mom = T::of(self.p.momentum);
                let rm = self.p.running_mean.value.data_mut();
                for ch in 0..c {
                    rm[ch] = (T::one() - mom) * rm[ch] + mom * mean[ch];
                }
                let unbias = if count > 1 { T::of(count as f64 / (count - 1) as f64) } else { T::one() };
                let rv = self.p.running_var.value.data_mut();
                for ch in 0..c {
                    rv[ch] = (T::one() - mom) * rv[ch] + mom * var[ch] * unbias;
                }
            }
            Phase::Eval => {
                if !self.warned_default_stats && self.has_default_stats() {
                    warn!("batchnorm evaluated with default running statistics (mean 0, var 1)");
                    self.warned_default_stats = true;
                }
                mean.copy_from_slice(self.p.running_mean.value.data());
                var.copy_from_slice(self.p.running_var.value.data());
            }
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut normalized = x.clone();
        let mut out = Tensor4::zeros(s);
        let gamma = self.p.gamma.value.data();
        let beta = self.p.beta.value.data();
        for n in 0..s.n {
            for ch in 0..c {
                let (m, is) = (mean[ch], inv_std[ch]);
                let (g, b) = (gamma[ch], beta[ch]);
                let xn = normalized.plane_mut(n, ch);
                for v in xn.iter_mut() {
                    *v = (*v - m) * is;
                }
                for (o, &v) in out.plane_mut(n, ch).iter_mut().zip(xn.iter()) {
                    *o = g * v + b;
                }
            }
        }
        self.tape = record.then_some(BnTape {
            normalized,
            inv_std,
            phase,
        });
        Ok(out)
    }

    pub fn forward(&mut self, x: &Tensor4<T>, phase: Phase) -> Result<Tensor4<T>> {
        self.forward_with(x, phase, phase == Phase::Train)
    }

    pub fn backward(&mut self, grad_out: &Tensor4<T>) -> Result<Tensor4<T>> {
        let tape = self.tape.take().ok_or_else(|| Error::Tape("batchnorm".into()))?;
        let s = grad_out.shape();
        if s != tape.normalized.shape() {
            return Err(Error::Tape(format!("grad {s} vs recorded {}", tape.normalized.shape())));
        }
        let c = s.c;
        let cnt = T::of((s.n * s.plane()) as f64);
        let gamma = self.p.gamma.value.data().to_vec();
        let mut gx = Tensor4::zeros(s);
        for ch in 0..c {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for n in 0..s.n {
                for (&g, &xh) in grad_out.plane(n, ch).iter().zip(tape.normalized.plane(n, ch)) {
                    sum_g += g;
                    sum_gx += g * xh;
                }
            }
            self.p.gamma.grad.data_mut()[ch] += sum_gx;
            self.p.beta.grad.data_mut()[ch] += sum_g;
            let k = gamma[ch] * tape.inv_std[ch];
            for n in 0..s.n {
                let go = grad_out.plane(n, ch);
                let xh = tape.normalized.plane(n, ch);
                let dst = gx.plane_mut(n, ch);
                match tape.phase {
                    Phase::Train => {
                        for i in 0..go.len() {
                            dst[i] = k * (go[i] - (sum_g + xh[i] * sum_gx) / cnt);
                        }
                    }
                    Phase::Eval => {
                        for i in 0..go.len() {
                            dst[i] = k * go[i];
                        }
                    }
                }
            }
        }
        Ok(gx)
    }
}

impl<T: Scalar> HasParams<T> for BatchNorm2d<T> {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        out.push((join(prefix, "gamma"), &self.p.gamma));
        out.push((join(prefix, "beta"), &self.p.beta));
        out.push((join(prefix, "running_mean"), &self.p.running_mean));
        out.push((join(prefix, "running_var"), &self.p.running_var));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a, T>>) {
        out.push((join(prefix, "gamma"), &mut self.p.gamma));
        out.push((join(prefix, "beta"), &mut self.p.beta));
        out.push((join(prefix, "running_mean"), &mut self.p.running_mean));
        out.push((join(prefix, "running_var"), &mut self.p.running_var));
    }
}
