//! 2-D point mass reaching the origin.
//!
//! State `(x, y, vx, vy)`, action `a` in `[-1, 1]^2`, explicit Euler with
//! `dt = 0.05`: `p' = p + dt v`, `v' = v + dt a`, then velocities are clipped
//! to `[-2, 2]` and positions to the walls at `[-2, 2]`; hitting a wall stops
//! motion into it. Start position uniform in `[-1, 1]^2` at rest. True reward
//! `exp(-|p|^2 / 0.1)`; 200-step episodes with no terminal states.

use rand::{Rng as _, SeedableRng};

use super::{check_finite_action, ActionSpace, Env, EnvSpec, StepResult};
use crate::error::Result;
use crate::rng::Rng;

pub const DT: f64 = 0.05;
pub const REWARD_WIDTH: f64 = 0.1;
pub const MAX_STEPS: usize = 200;
pub const POSITION_BOUND: f64 = 2.0;
pub const SPEED_BOUND: f64 = 2.0;

pub struct PointMass {
    spec: EnvSpec,
    state: [f64; 4],
    t: usize,
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl PointMass {
    pub fn new() -> Self {
        let spec = EnvSpec {
            env_id: "pointmass".into(),
            obs_dim: 4,
            act_dim: 2,
            action_low: vec![-1.0, -1.0],
            action_high: vec![1.0, 1.0],
            max_episode_steps: MAX_STEPS,
            true_reward_available: true,
            action_space: ActionSpace::Continuous { low: vec![-1.0, -1.0], high: vec![1.0, 1.0] },
        };
        Self { spec, state: [0.0; 4], t: 0 }
    }

    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
    }

    pub fn reward(state: &[f64]) -> f64 {
        (-(state[0] * state[0] + state[1] * state[1]) / REWARD_WIDTH).exp()
    }
}

impl Env for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = Rng::seed_from_u64(seed);
        self.state = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), 0.0, 0.0];
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_finite_action(action, 2)?;
        let mut a = action.to_vec();
        let clipped = self.spec.action_space.clip(&mut a);
        let [x, y, vx, vy] = self.state;
        let mut next = [x + DT * vx, y + DT * vy, vx + DT * a[0], vy + DT * a[1]];
        for i in 0..2 {
            next[i + 2] = next[i + 2].clamp(-SPEED_BOUND, SPEED_BOUND);
            if next[i].abs() >= POSITION_BOUND {
                next[i] = next[i].clamp(-POSITION_BOUND, POSITION_BOUND);
                if next[i] * next[i + 2] > 0.0 {
                    next[i + 2] = 0.0;
                }
            }
        }
        self.state = next;
        self.t += 1;
        Ok(StepResult {
            next_state: self.observation(),
            true_reward: Self::reward(&self.state),
            terminal: false,
            truncated: self.t >= MAX_STEPS,
            clipped,
        })
    }

    fn observation(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn constants(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("dt", DT),
            ("action_bound", 1.0),
            ("start_position_half_width", 1.0),
            ("position_bound", POSITION_BOUND),
            ("speed_bound", SPEED_BOUND),
            ("reward_width", REWARD_WIDTH),
            ("max_episode_steps", MAX_STEPS as f64),
        ]
    }
}
