use serde::{Deserialize, Serialize};

use super::mlp::{MlpParams, MlpSpec};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: MlpParams,
    pub v: MlpParams,
    pub timestep: u64,
}

impl AdamState {
    pub fn new(spec: &MlpSpec, config: AdamConfig) -> Self {
        Self { config, m: MlpParams::zeros(spec), v: MlpParams::zeros(spec), timestep: 0 }
    }

    /// One bias-corrected Adam descent step on `params`.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        ensure(params.same_shape(grads) && params.same_shape(&self.m), || "Adam shape mismatch".into())?;
        if !grads.all_finite() {
            return Err(Error::Numerical("non-finite gradient passed to Adam".into()));
        }
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        self.timestep += 1;
        let bc1 = 1.0 - beta1.powi(self.timestep as i32);
        let bc2 = 1.0 - beta2.powi(self.timestep as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads.iter()).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TargetUpdate {
    Hard,
    Polyak { tau: f64 },
}

/// Move `target` toward `online`: copy, or `tau * online + (1 - tau) * target`.
pub fn target_update(online: &MlpParams, target: &mut MlpParams, mode: TargetUpdate) -> Result<()> {
    ensure(online.same_shape(target), || "target network shape mismatch".into())?;
    match mode {
        TargetUpdate::Hard => target.clone_from(online),
        TargetUpdate::Polyak { tau } => {
            for (t, o) in target.iter_mut().zip(online.iter()) {
                *t = tau * o + (1.0 - tau) * *t;
            }
        }
    }
    Ok(())
}
