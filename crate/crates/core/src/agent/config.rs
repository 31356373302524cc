use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::replay::{CapOverflow, ReplayConfig};

/// How a terminal transition bootstraps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalBootstrap {
    /// `y = r`: nothing after the terminal step.
    Zero,
    /// `y = r + γ / (1 - γ)`: the terminal state is absorbing and counts as
    /// expert-like forever, i.e. it earns reward 1 on every later step.
    Absorbing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct D2Config {
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Exploration noise std as a fraction of the action half-range.
    pub exploration_sigma: f64,
    /// Exploration rate for discrete action spaces.
    pub epsilon: f64,
    pub policy_delay: usize,
    pub polyak_tau: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub positive_fraction: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Step size of the tabular critic used on discrete environments.
    pub tabular_lr: f64,
    /// `None` picks the environment's convention: absorbing for goal-terminated
    /// grids, zero otherwise.
    pub terminal_bootstrap: Option<TerminalBootstrap>,
    pub online_fraction_cap: f64,
    pub online_capacity: usize,
    pub nil_capacity: usize,
    pub cap_overflow: CapOverflow,
    /// Skip environment interaction for the first this-many steps and train
    /// from the buffers alone.
    pub no_collect_steps: usize,
    /// Abort when a critic value exceeds this multiple of `1/(1-γ)`.
    pub divergence_factor: f64,
    /// Abort when a checkpoint sees a critic value above `1.5/(1-γ)`.
    pub strict_q_bound: bool,
}

impl Default for D2Config {
    fn default() -> Self {
        Self {
            critic_lr: 1e-3,
            actor_lr: 1e-3,
            gamma: 0.99,
            batch_size: 256,
            exploration_sigma: 0.1,
            epsilon: 0.1,
            policy_delay: 2,
            polyak_tau: 0.005,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            total_steps: 100_000,
            warmup_steps: 1_000,
            eval_interval: 5_000,
            eval_episodes: 10,
            positive_fraction: 0.5,
            actor_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            tabular_lr: 0.1,
            terminal_bootstrap: None,
            online_fraction_cap: 0.25,
            online_capacity: 100_000,
            nil_capacity: 1_000_000,
            cap_overflow: CapOverflow::Reroute,
            no_collect_steps: 0,
            divergence_factor: 10.0,
            strict_q_bound: true,
        }
    }
}

pub const Q_BOUND_FACTOR: f64 = 1.5;

impl D2Config {
    pub fn validate(&self) -> Result<()> {
        ensure(self.critic_lr > 0.0 && self.actor_lr > 0.0 && self.tabular_lr > 0.0, || "learning rates must be positive".into())?;
        ensure((0.0..1.0).contains(&self.gamma), || format!("gamma {} outside [0, 1)", self.gamma))?;
        ensure(self.batch_size >= 1, || "batch_size must be positive".into())?;
        ensure(self.policy_delay >= 1, || "policy_delay must be at least 1".into())?;
        ensure(self.polyak_tau > 0.0 && self.polyak_tau <= 1.0, || "polyak_tau must lie in (0, 1]".into())?;
        ensure(self.exploration_sigma >= 0.0 && self.target_noise >= 0.0 && self.target_noise_clip >= 0.0, || {
            "noise scales must be non-negative".into()
        })?;
        ensure((0.0..=1.0).contains(&self.epsilon), || "epsilon must lie in [0, 1]".into())?;
        ensure(self.eval_interval >= 1 && self.eval_episodes >= 1, || "evaluation settings must be positive".into())?;
        ensure((0.0..=1.0).contains(&self.positive_fraction), || "positive_fraction must lie in [0, 1]".into())?;
        ensure(self.divergence_factor > Q_BOUND_FACTOR, || "divergence_factor must exceed 1.5".into())
    }

    pub fn replay_config(&self) -> ReplayConfig {
        ReplayConfig {
            online_fraction_cap: self.online_fraction_cap,
            online_capacity: self.online_capacity,
            nil_capacity: self.nil_capacity,
            cap_overflow: self.cap_overflow,
        }
    }

    pub fn bootstrap_for(&self, env_id: &str) -> TerminalBootstrap {
        self.terminal_bootstrap.unwrap_or(if env_id == "grid5" {
            TerminalBootstrap::Absorbing
        } else {
            TerminalBootstrap::Zero
        })
    }

    /// Largest critic magnitude compatible with rewards in `{0, 1}`.
    pub fn value_bound(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }
}
