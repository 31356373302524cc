use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::grid::GridWorld;
use super::pendulum::{wrap_angle, Pendulum, MAX_TORQUE};
use super::ActionSpace;
use crate::error::{contract, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertKind {
    /// Greedy action of value iteration (grid5).
    ValueIterationGreedy,
    /// Saturated PD law toward the origin (pointmass).
    ScriptedPd,
    /// Energy pumping with a PD catch near upright (pendulum).
    EnergySwingup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Stochasticity {
    Deterministic,
    /// Zero-mean noise with standard deviation `sigma` times the action half-range.
    Gaussian { sigma: f64 },
}

pub const PD_KP: f64 = 4.0;
pub const PD_KD: f64 = 4.0;
pub const SWING_CATCH_ANGLE: f64 = 0.6;
pub const SWING_KP: f64 = 10.0;
pub const SWING_KD: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ExpertController {
    pub env_id: String,
    pub kind: ExpertKind,
    pub stochasticity: Stochasticity,
    action_space: ActionSpace,
    /// Greedy action per open grid cell.
    grid_policy: Vec<usize>,
}

impl ExpertController {
    pub fn for_env(env_id: &str, stochasticity: Stochasticity) -> Result<Self> {
        let env = super::make_env(env_id)?;
        let action_space = env.spec().action_space.clone();
        let (kind, grid_policy) = match env_id {
            "grid5" => (ExpertKind::ValueIterationGreedy, GridWorld::greedy_actions(&GridWorld::value_iteration(1e-10))),
            "pointmass" => (ExpertKind::ScriptedPd, Vec::new()),
            _ => (ExpertKind::EnergySwingup, Vec::new()),
        };
        if let Stochasticity::Gaussian { sigma } = stochasticity {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(contract(format!("noise sigma {sigma} must be finite and non-negative")));
            }
            if kind == ExpertKind::ValueIterationGreedy && sigma > 0.0 {
                return Err(contract("gaussian action noise is undefined for the discrete grid expert"));
            }
        }
        Ok(Self { env_id: env_id.to_string(), kind, stochasticity, action_space, grid_policy })
    }

    pub fn deterministic(env_id: &str) -> Result<Self> {
        Self::for_env(env_id, Stochasticity::Deterministic)
    }

    /// Provenance tag stored with demonstrations.
    pub fn tag(&self) -> String {
        match self.stochasticity {
            Stochasticity::Deterministic => "deterministic".into(),
            Stochasticity::Gaussian { sigma } => format!("stochastic:{sigma}"),
        }
    }

    /// Noise-free action.
    pub fn mean_action(&self, state: &[f64]) -> Vec<f64> {
        match self.kind {
            ExpertKind::ValueIterationGreedy => {
                let cell = GridWorld::cell_of(state);
                let idx = GridWorld::free_cells().iter().position(|c| *c == cell).unwrap_or(0);
                vec![self.grid_policy[idx] as f64]
            }
            ExpertKind::ScriptedPd => (0..2)
                .map(|i| (-PD_KP * state[i] - PD_KD * state[i + 2]).clamp(-1.0, 1.0))
                .collect(),
            ExpertKind::EnergySwingup => vec![swing_up(state)],
        }
    }

    /// Action for `state`, with noise drawn from `rng` for the gaussian kind.
    pub fn act(&self, state: &[f64], rng: &mut Rng) -> Vec<f64> {
        let mut a = self.mean_action(state);
        if let Stochasticity::Gaussian { sigma } = self.stochasticity {
            if sigma > 0.0 {
                for (x, s) in a.iter_mut().zip(self.action_space.scale()) {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += sigma * s * z;
                }
            }
        }
        self.action_space.clip(&mut a);
        a
    }

    /// Greedy action per open grid cell (empty for continuous experts).
    pub fn grid_policy(&self) -> &[usize] {
        &self.grid_policy
    }
}

fn swing_up(obs: &[f64]) -> f64 {
    let theta = wrap_angle(obs[1].atan2(obs[0]));
    let omega = obs[2];
    if theta.abs() < SWING_CATCH_ANGLE {
        return (-SWING_KP * theta - SWING_KD * omega).clamp(-MAX_TORQUE, MAX_TORQUE);
    }
    // Energy relative to resting upright; pump while below, brake while above.
    let k = Pendulum::gravity_gain();
    let e_rel = 0.5 * omega * omega + k * (theta.cos() - 1.0);
    let direction = if omega == 0.0 { 1.0 } else { omega.signum() };
    (-e_rel * direction).clamp(-MAX_TORQUE, MAX_TORQUE)
}
