//! In-repo environments with documented dynamics and scripted experts.
//!
//! Environments report a true reward for evaluation only. Training code
//! interacts through [`RewardFreeEnv`], which never exposes it.

mod expert;
mod grid;
mod pendulum;
mod pointmass;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use expert::{ExpertController, ExpertKind, Stochasticity};
pub use grid::{GridWorld, GRID_COLS, GRID_GOAL, GRID_ROWS, GRID_WALLS};
pub use pendulum::Pendulum;
pub use pointmass::PointMass;

use crate::error::{contract, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActionSpace {
    /// Actions are a single entry holding the index `0..n`.
    Discrete { n: usize },
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    /// Width of the action as seen by networks: one-hot for discrete spaces.
    pub fn encoded_dim(&self) -> usize {
        match self {
            ActionSpace::Discrete { n } => *n,
            ActionSpace::Continuous { low, .. } => low.len(),
        }
    }

    pub fn encode(&self, action: &[f64], out: &mut Vec<f64>) {
        match self {
            ActionSpace::Discrete { n } => {
                let k = action[0] as usize;
                out.extend((0..*n).map(|i| if i == k { 1.0 } else { 0.0 }));
            }
            ActionSpace::Continuous { .. } => out.extend_from_slice(action),
        }
    }

    pub fn sample_uniform(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            ActionSpace::Discrete { n } => vec![rng.random_range(0..*n) as f64],
            ActionSpace::Continuous { low, high } => {
                low.iter().zip(high).map(|(l, h)| rng.random_range(*l..=*h)).collect()
            }
        }
    }

    /// Project onto the valid set; returns whether anything changed.
    pub fn clip(&self, action: &mut [f64]) -> bool {
        let before = action.to_vec();
        match self {
            ActionSpace::Discrete { n } => action[0] = action[0].round().clamp(0.0, (*n - 1) as f64),
            ActionSpace::Continuous { low, high } => {
                for ((a, l), h) in action.iter_mut().zip(low).zip(high) {
                    *a = a.clamp(*l, *h);
                }
            }
        }
        before != action
    }

    pub fn contains(&self, action: &[f64]) -> bool {
        match self {
            ActionSpace::Discrete { n } => {
                action.len() == 1 && action[0].fract() == 0.0 && action[0] >= 0.0 && (action[0] as usize) < *n
            }
            ActionSpace::Continuous { low, high } => {
                action.len() == low.len() && action.iter().zip(low).zip(high).all(|((a, l), h)| a >= l && a <= h)
            }
        }
    }

    pub fn scale(&self) -> Vec<f64> {
        match self {
            ActionSpace::Discrete { .. } => vec![1.0],
            ActionSpace::Continuous { low, high } => low.iter().zip(high).map(|(l, h)| (h - l) / 2.0).collect(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            ActionSpace::Discrete { .. } => vec![0.0],
            ActionSpace::Continuous { low, high } => low.iter().zip(high).map(|(l, h)| (h + l) / 2.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_episode_steps: usize,
    pub true_reward_available: bool,
    pub action_space: ActionSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    /// Evaluation only.
    pub true_reward: f64,
    pub terminal: bool,
    pub truncated: bool,
    /// The submitted action was outside the bounds and got clipped.
    pub clipped: bool,
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Draw a start state from the environment's documented initial
    /// distribution; identical seeds give identical episodes.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    fn observation(&self) -> Vec<f64>;

    /// Named dynamics constants, for `envs describe`.
    fn constants(&self) -> Vec<(&'static str, f64)>;
}

pub const ENV_IDS: [&str; 3] = ["grid5", "pointmass", "pendulum"];

pub fn make_env(env_id: &str) -> Result<Box<dyn Env>> {
    match env_id {
        "grid5" => Ok(Box::new(GridWorld::new())),
        "pointmass" => Ok(Box::new(PointMass::new())),
        "pendulum" => Ok(Box::new(Pendulum::new())),
        other => Err(contract(format!("unknown env_id {other:?}; expected one of {ENV_IDS:?}"))),
    }
}

/// What the learner sees after an action: no reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub truncated: bool,
}

/// Training-side view of an environment with the true reward stripped.
pub struct RewardFreeEnv {
    inner: Box<dyn Env>,
}

impl RewardFreeEnv {
    pub fn new(inner: Box<dyn Env>) -> Self {
        Self { inner }
    }

    pub fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Observed> {
        let r = self.inner.step(action)?;
        Ok(Observed { next_state: r.next_state, terminal: r.terminal, truncated: r.truncated })
    }
}

pub(crate) fn check_finite_action(action: &[f64], act_dim: usize) -> Result<()> {
    if action.len() != act_dim {
        return Err(contract(format!("action has length {}, expected {act_dim}", action.len())));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(contract("non-finite action"));
    }
    Ok(())
}

/// Seed of the `i`-th evaluation episode under a master seed.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    rng::substream_seed(seed, &format!("episode/{episode}"))
}

/// Mean and population standard deviation of the undiscounted true return.
pub fn evaluate_policy(
    env: &mut dyn Env,
    mut policy: impl FnMut(&[f64]) -> Vec<f64>,
    n_episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_episodes == 0 {
        return Err(contract("n_episodes must be at least 1"));
    }
    let mut returns = Vec::with_capacity(n_episodes);
    for ep in 0..n_episodes {
        let mut obs = env.reset(episode_seed(seed, ep));
        let mut total = 0.0;
        loop {
            let action = policy(&obs);
            let r = env.step(&action)?;
            total += r.true_reward;
            obs = r.next_state;
            if r.terminal || r.truncated {
                break;
            }
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / n_episodes as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n_episodes as f64;
    Ok((mean, var.sqrt()))
}

/// Mean and standard deviation of the deterministic expert's return.
pub fn calibrate_expert(env_id: &str, n_episodes: usize, seed: u64) -> Result<(f64, f64)> {
    let mut env = make_env(env_id)?;
    let expert = ExpertController::deterministic(env_id)?;
    evaluate_policy(env.as_mut(), |s| expert.mean_action(s), n_episodes, seed)
}

/// Expert mean return over 100 episodes (`d2lab envs calibrate`, seed 0),
/// used to normalize returns.
pub fn expert_mean_return(env_id: &str) -> Option<f64> {
    match env_id {
        "grid5" => Some(GRID5_EXPERT_MEAN),
        "pointmass" => Some(POINTMASS_EXPERT_MEAN),
        "pendulum" => Some(PENDULUM_EXPERT_MEAN),
        _ => None,
    }
}

pub const GRID5_EXPERT_MEAN: f64 = 0.9175415266883412;
pub const POINTMASS_EXPERT_MEAN: f64 = 175.84575070159653;
pub const PENDULUM_EXPERT_MEAN: f64 = 162.32698091770504;
