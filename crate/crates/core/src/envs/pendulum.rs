//! Torque-limited pendulum swing-up.
//!
//! Angle `theta` is measured from upright. Semi-implicit Euler at
//! `dt = 0.05`: `w' = clip(w + dt (3g/(2l) sin theta + 3/(m l^2) u), -8, 8)`,
//! `theta' = theta + dt w'`, with `g = 10`, `m = l = 1`, `u` in `[-2, 2]`.
//! Observation `(cos theta, sin theta, w)`. Episodes start hanging down,
//! `theta ~ pi + U(-0.2, 0.2)`, `w ~ U(-0.2, 0.2)`, and last 200 steps.
//! True reward `(1 + cos theta) / 2`.

use std::f64::consts::PI;

use rand::{Rng as _, SeedableRng};

use super::{check_finite_action, ActionSpace, Env, EnvSpec, StepResult};
use crate::error::Result;
use crate::rng::Rng;

pub const DT: f64 = 0.05;
pub const G: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_STEPS: usize = 200;

pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    omega: f64,
    t: usize,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

/// Angle wrapped to `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new() -> Self {
        let spec = EnvSpec {
            env_id: "pendulum".into(),
            obs_dim: 3,
            act_dim: 1,
            action_low: vec![-MAX_TORQUE],
            action_high: vec![MAX_TORQUE],
            max_episode_steps: MAX_STEPS,
            true_reward_available: true,
            action_space: ActionSpace::Continuous { low: vec![-MAX_TORQUE], high: vec![MAX_TORQUE] },
        };
        Self { spec, theta: PI, omega: 0.0, t: 0 }
    }

    /// Gravity gain `3g / (2l)`.
    pub fn gravity_gain() -> f64 {
        3.0 * G / (2.0 * LENGTH)
    }

    /// Torque gain `3 / (m l^2)`.
    pub fn torque_gain() -> f64 {
        3.0 / (MASS * LENGTH * LENGTH)
    }

    /// Conserved quantity of the torque-free dynamics: `w^2/2 + k cos theta`.
    pub fn energy(theta: f64, omega: f64) -> f64 {
        0.5 * omega * omega + Self::gravity_gain() * theta.cos()
    }

    pub fn set_state(&mut self, theta: f64, omega: f64) {
        self.theta = theta;
        self.omega = omega;
    }

    pub fn angle(&self) -> (f64, f64) {
        (self.theta, self.omega)
    }

    /// One integrator step without clipping or bookkeeping, for any `dt`.
    pub fn integrate(theta: f64, omega: f64, u: f64, dt: f64) -> (f64, f64) {
        let acc = Self::gravity_gain() * theta.sin() + Self::torque_gain() * u;
        let omega = (omega + dt * acc).clamp(-MAX_SPEED, MAX_SPEED);
        (theta + dt * omega, omega)
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = Rng::seed_from_u64(seed);
        self.theta = PI + rng.random_range(-0.2..=0.2);
        self.omega = rng.random_range(-0.2..=0.2);
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_finite_action(action, 1)?;
        let mut a = action.to_vec();
        let clipped = self.spec.action_space.clip(&mut a);
        let (theta, omega) = Self::integrate(self.theta, self.omega, a[0], DT);
        self.theta = theta;
        self.omega = omega;
        self.t += 1;
        Ok(StepResult {
            next_state: self.observation(),
            true_reward: 0.5 * (1.0 + self.theta.cos()),
            terminal: false,
            truncated: self.t >= MAX_STEPS,
            clipped,
        })
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.omega]
    }

    fn constants(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("dt", DT),
            ("g", G),
            ("mass", MASS),
            ("length", LENGTH),
            ("max_torque", MAX_TORQUE),
            ("max_speed", MAX_SPEED),
            ("max_episode_steps", MAX_STEPS as f64),
        ]
    }
}
