//! Adam with bias correction. Moment buffers are created lazily per
//! parameter path and always kept in 64-bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::layers::ParamMut;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid!("learning rate must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(invalid!("betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid!("eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Updates every trainable parameter from its accumulated gradient.
    /// A non-finite gradient anywhere aborts the step before anything is
    /// modified.
    pub fn step<T: Scalar>(&mut self, params: &mut [ParamMut<'_, T>]) -> Result<()> {
        for (path, p) in params.iter() {
            if p.trainable && !p.grad.is_finite() {
                return Err(Error::Param {
                    path: path.clone(),
                    msg: "non-finite gradient; optimizer step aborted".into(),
                });
            }
        }
        for (path, p) in params.iter() {
            if let Some(m) = self.moments.get(path) {
                if m.m.len() != p.value.len() {
                    return Err(Error::Param {
                        path: path.clone(),
                        msg: format!("optimizer state holds {} values, parameter has {}", m.m.len(), p.value.len()),
                    });
                }
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (path, p) in params.iter_mut() {
            if !p.trainable {
                continue;
            }
            let len = p.value.len();
            let mom = self.moments.entry(path.clone()).or_insert_with(|| Moments {
                m: vec![0.0; len],
                v: vec![0.0; len],
            });
            let grad = p.grad.data();
            let mut updated = Vec::with_capacity(len);
            for (i, (&w, g)) in p.value.data().iter().zip(grad).enumerate() {
                let g = g.f64();
                mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
                mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
                let mhat = mom.m[i] / c1;
                let vhat = mom.v[i] / c2;
                updated.push(T::of(w.f64() - lr * mhat / (vhat.sqrt() + eps)));
            }
            p.value.data_mut().copy_from_slice(&updated);
        }
        Ok(())
    }
}
