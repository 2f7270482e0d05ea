//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::graph::Gradients;
use crate::neural::params::{quantize, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient norm ceiling; `<= 0` disables clipping.
    pub max_grad_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        Adam {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Applies one update, quantizes parameters and bumps the store version.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        if grads.grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::Contract("optimizer state does not match parameters".into()));
        }
        let norm = grads.global_norm();
        let clip = if self.cfg.max_grad_norm > 0.0 && norm > self.cfg.max_grad_norm {
            self.cfg.max_grad_norm / norm
        } else {
            1.0
        };
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powf(self.t as f64);
        let bc2 = 1.0 - b2.powf(self.t as f64);
        for (pi, p) in store.params_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[pi], &mut self.v[pi], &grads.grads[pi]);
            for k in 0..p.value.len() {
                let gk = g[k] * clip;
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p.value[k] = quantize(p.value[k] - self.cfg.lr * mh / (vh.sqrt() + self.cfg.eps));
            }
        }
        store.version += 1;
        Ok(())
    }
}
