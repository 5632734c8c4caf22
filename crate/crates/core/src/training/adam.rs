//! Adam with bias correction and decoupled weight decay.

use std::collections::BTreeMap;

use scs_tensor::{Gradients, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScsError};
use crate::model::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Moments and step count of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Tensor<f32>,
    pub v: Tensor<f32>,
    pub step: u64,
}

/// Optimizer state. Each parameter keeps its own step count, so parameters
/// that sit out some steps (the reference branch during automatic-mode
/// steps) are bias-corrected by the number of updates they actually got.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            state: BTreeMap::new(),
        }
    }

    pub fn state(&self) -> &BTreeMap<String, Moments> {
        &self.state
    }

    pub fn restore(config: AdamConfig, state: BTreeMap<String, Moments>) -> Self {
        Self { config, state }
    }

    /// Updates every parameter named in `grads`.
    pub fn step(
        &mut self,
        params: &mut ParamSet<f32>,
        grads: &BTreeMap<String, Tensor<f32>>,
    ) -> Result<()> {
        let c = self.config;
        for (name, grad) in grads {
            let p = params.get_mut(name).ok_or_else(|| {
                ScsError::Config(format!("gradient for unknown parameter `{name}`"))
            })?;
            if p.shape() != grad.shape() {
                return Err(ScsError::Numerical(format!(
                    "gradient of `{name}` has shape {:?}, parameter {:?}",
                    grad.shape(),
                    p.shape()
                )));
            }
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: Tensor::zeros(p.shape().to_vec()),
                v: Tensor::zeros(p.shape().to_vec()),
                step: 0,
            });
            st.step += 1;
            let t = st.step as i32;
            let bc1 = 1.0 - c.beta1.powi(t);
            let bc2 = 1.0 - c.beta2.powi(t);
            let (m, v) = (st.m.data_mut(), st.v.data_mut());
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                let gi = grad.data()[i] as f64;
                let mi = c.beta1 * m[i] as f64 + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v[i] as f64 + (1.0 - c.beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = (mi / bc1) / ((vi / bc2).sqrt() + c.eps) + c.weight_decay * *w as f64;
                *w = (*w as f64 - c.lr * update) as f32;
            }
        }
        Ok(())
    }
}

/// Takes the gradient of every bound parameter, failing on any that has none.
pub fn collect_gradients(
    bound: &BTreeMap<String, Var>,
    grads: &mut Gradients<f32>,
) -> Result<BTreeMap<String, Tensor<f32>>> {
    bound
        .iter()
        .map(|(name, &v)| {
            grads
                .take(v)
                .map(|t| (name.clone(), t))
                .ok_or_else(|| ScsError::MissingGradient(name.clone()))
        })
        .collect()
}
