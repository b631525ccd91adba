use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NumericError, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created lazily, shaped
/// like the parameter they track.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update to every parameter named in `names`, using the
    /// matching entry of `grads`.
    pub fn step<'a>(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
        names: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), NumericError> {
        let names: Vec<&str> = names.into_iter().collect();
        for &name in &names {
            if !grads.contains_key(name) {
                return Err(NumericError::MissingGrad {
                    name: name.to_string(),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for name in names {
            let g = grads[name].values();
            let p = params.get_mut(name)?;
            if p.len() != g.len() {
                return Err(NumericError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: grads[name].shape().to_vec(),
                });
            }
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; g.len()]);
            let v = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; g.len()]);
            for (((pi, &gi), mi), vi) in p.values_mut().iter_mut().zip(g).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
