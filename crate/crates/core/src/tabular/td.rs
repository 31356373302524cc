//! Asynchronous TD learning of the successor-form occupancy proxy from
//! sampled on-policy transitions.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mdp::{TabularMdp, TabularPolicy};
use super::occupancy::{build_chain, solve_forward_with_reward, OccupancyKind, OccupancyVector};
use super::ergodicity::ergodicity_report;
use crate::error::{ensure, Error, Result};
use crate::rng::Rng;

/// Per-pair step-size rule, indexed by the visit count `k` of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepSchedule {
    /// `1 / (k + 1)`
    Harmonic,
    /// `c / (k + c)`
    Scaled { c: f64 },
    /// Fixed step; only for tests and diagnostics, fails Robbins-Monro.
    Constant { alpha: f64 },
}

impl StepSchedule {
    pub fn alpha(&self, k: u64) -> f64 {
        match *self {
            StepSchedule::Harmonic => 1.0 / (k as f64 + 1.0),
            StepSchedule::Scaled { c } => c / (k as f64 + c),
            StepSchedule::Constant { alpha } => alpha,
        }
    }

    pub fn satisfies_robbins_monro(&self) -> bool {
        match *self {
            StepSchedule::Harmonic => true,
            StepSchedule::Scaled { c } => c > 0.0,
            StepSchedule::Constant { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// `(1 - gamma) p0(s) pi(a|s)`
    Exact,
    /// 1 on the deterministic policy's chosen action, 0 elsewhere.
    Indicator,
}

impl RewardMode {
    pub fn reward(&self, mdp: &TabularMdp, policy: &TabularPolicy, s: usize, a: usize) -> f64 {
        match self {
            RewardMode::Exact => (1.0 - mdp.gamma()) * mdp.p0()[s] * policy.prob(s, a),
            RewardMode::Indicator => {
                if policy.prob(s, a) == 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn reward_vector(&self, mdp: &TabularMdp, policy: &TabularPolicy) -> Vec<f64> {
        (0..mdp.n_states())
            .flat_map(|s| (0..mdp.n_actions()).map(move |a| (s, a)))
            .map(|(s, a)| self.reward(mdp, policy, s, a))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairTransition {
    pub s: usize,
    pub a: usize,
    pub next_s: usize,
    pub next_a: usize,
}

#[derive(Debug, Clone)]
pub struct TdState {
    n_actions: usize,
    pub estimate: Vec<f64>,
    pub visits: Vec<u64>,
    pub schedule: StepSchedule,
}

impl TdState {
    /// Zero-initialized estimate.
    pub fn new(n_states: usize, n_actions: usize, schedule: StepSchedule) -> Self {
        Self {
            n_actions,
            estimate: vec![0.0; n_states * n_actions],
            visits: vec![0; n_states * n_actions],
            schedule,
        }
    }

    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn value(&self, s: usize, a: usize) -> f64 {
        self.estimate[self.idx(s, a)]
    }

    /// One TD step on `(s, a)` using the pair's own visit-count step size.
    pub fn update(&mut self, t: PairTransition, reward: f64, gamma: f64) -> Result<f64> {
        let alpha = self.schedule.alpha(self.visits[self.idx(t.s, t.a)]);
        let delta = self.update_with_alpha(t, reward, gamma, alpha)?;
        let i = self.idx(t.s, t.a);
        self.visits[i] += 1;
        Ok(delta)
    }

    /// `d(s,a) += alpha [r + gamma d(s',a') - d(s,a)]`; returns the TD error.
    pub fn update_with_alpha(&mut self, t: PairTransition, reward: f64, gamma: f64, alpha: f64) -> Result<f64> {
        if !(reward.is_finite() && gamma.is_finite() && alpha.is_finite()) {
            return Err(Error::Numerical(format!("non-finite TD input r={reward} gamma={gamma} alpha={alpha}")));
        }
        ensure(t.s * self.n_actions < self.estimate.len() && t.next_s * self.n_actions < self.estimate.len(), || {
            "transition state out of range".into()
        })?;
        ensure(t.a < self.n_actions && t.next_a < self.n_actions, || "transition action out of range".into())?;
        let i = self.idx(t.s, t.a);
        let delta = reward + gamma * self.estimate[self.idx(t.next_s, t.next_a)] - self.estimate[i];
        self.estimate[i] += alpha * delta;
        if !self.estimate[i].is_finite() {
            return Err(Error::Numerical(format!("estimate at pair {i} became non-finite")));
        }
        Ok(delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdRunConfig {
    pub schedule: StepSchedule,
    pub reward_mode: RewardMode,
    pub max_steps: usize,
    pub tol: f64,
    /// Rollouts restart from p0 after this many steps.
    pub episode_length: usize,
    /// Record the error every this many steps.
    pub trace_every: usize,
}

impl Default for TdRunConfig {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::Harmonic,
            reward_mode: RewardMode::Exact,
            max_steps: 200_000,
            tol: 0.0,
            episode_length: 100,
            trace_every: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TdRun {
    pub estimate: OccupancyVector,
    pub exact: OccupancyVector,
    /// `(step, sup-norm error)` pairs.
    pub trace: Vec<(usize, f64)>,
    pub steps: usize,
    pub warnings: Vec<String>,
}

impl TdRun {
    pub fn final_error(&self) -> f64 {
        self.estimate.sup_distance(&self.exact.values)
    }
}

fn sample_index(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding slack: last index with positive mass.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Roll out `policy` from p0 and run TD until the sup-norm error to the
/// exact successor-form solution drops to `tol` or `max_steps` is reached.
pub fn run_td_to_convergence(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    config: &TdRunConfig,
    rng: &mut Rng,
) -> Result<TdRun> {
    ensure(config.episode_length > 0 && config.trace_every > 0, || "episode_length and trace_every must be positive".into())?;
    let gamma = mdp.gamma();
    let chain = build_chain(mdp, policy)?;
    let mut warnings = Vec::new();
    let report = ergodicity_report(&chain);
    if !report.irreducible {
        let msg = "policy chain is not irreducible; unreachable pairs keep their initial value".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let rewards = config.reward_mode.reward_vector(mdp, policy);
    let exact = solve_forward_with_reward(&chain, gamma, &rewards)?;

    let mut td = TdState::new(mdp.n_states(), mdp.n_actions(), config.schedule);
    let mut trace = Vec::new();
    let error = |td: &TdState| exact.sup_distance(&td.estimate);

    let mut s = sample_index(mdp.p0(), rng);
    let mut a = sample_index(policy.row(s), rng);
    let mut steps = 0;
    while steps < config.max_steps {
        let next_s = sample_index(mdp.next_dist(s, a), rng);
        let next_a = sample_index(policy.row(next_s), rng);
        let r = rewards[s * mdp.n_actions() + a];
        td.update(PairTransition { s, a, next_s, next_a }, r, gamma)?;
        steps += 1;
        if steps % config.episode_length == 0 {
            s = sample_index(mdp.p0(), rng);
            a = sample_index(policy.row(s), rng);
        } else {
            s = next_s;
            a = next_a;
        }
        if steps % config.trace_every == 0 {
            let e = error(&td);
            trace.push((steps, e));
            if e <= config.tol {
                break;
            }
        }
    }
    let estimate = OccupancyVector::new(mdp.n_states(), mdp.n_actions(), td.estimate, OccupancyKind::Forward)?;
    Ok(TdRun { estimate, exact, trace, steps, warnings })
}
