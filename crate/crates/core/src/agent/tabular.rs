//! Tabular double-Q critic for discrete actions and one-hot observations.
//! The policy is greedy in the first critic.

use rand::Rng as _;

use super::config::{D2Config, TerminalBootstrap};
use crate::error::{contract, ensure, Error, Result};
use crate::replay::RewardedBatch;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularAgent {
    n_states: usize,
    n_actions: usize,
    q: [Vec<f64>; 2],
    q_target: [Vec<f64>; 2],
    gamma: f64,
    lr: f64,
    tau: f64,
    epsilon: f64,
    bootstrap: TerminalBootstrap,
    divergence_limit: f64,
    critic_updates: usize,
    q_abs_max: Option<f64>,
}

/// Index of the hot entry of a one-hot observation.
pub fn state_index(obs: &[f64]) -> Result<usize> {
    let mut hot = obs.iter().enumerate().filter(|(_, v)| **v != 0.0);
    match (hot.next(), hot.next()) {
        (Some((i, v)), None) if *v == 1.0 => Ok(i),
        _ => Err(contract("tabular agent needs one-hot observations")),
    }
}

impl TabularAgent {
    pub fn new(n_states: usize, n_actions: usize, cfg: &D2Config, bootstrap: TerminalBootstrap) -> Result<Self> {
        ensure(n_states >= 1 && n_actions >= 1, || "empty table".into())?;
        let zeros = vec![0.0; n_states * n_actions];
        Ok(Self {
            n_states,
            n_actions,
            q: [zeros.clone(), zeros.clone()],
            q_target: [zeros.clone(), zeros],
            gamma: cfg.gamma,
            lr: cfg.tabular_lr,
            tau: cfg.polyak_tau,
            epsilon: cfg.epsilon,
            bootstrap,
            divergence_limit: cfg.divergence_factor * cfg.value_bound(),
            critic_updates: 0,
            q_abs_max: None,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn q(&self, critic: usize, state: usize, action: usize) -> f64 {
        self.q[critic][state * self.n_actions + action]
    }

    pub fn critic_updates(&self) -> usize {
        self.critic_updates
    }

    fn argmax(&self, table: &[f64], s: usize) -> usize {
        let row = &table[s * self.n_actions..(s + 1) * self.n_actions];
        let mut best = 0;
        for (a, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = a;
            }
        }
        best
    }

    /// Greedy action in `Q_A`, lowest index on ties.
    pub fn greedy(&self, state: usize) -> usize {
        self.argmax(&self.q[0], state)
    }

    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.greedy(state_index(obs)?) as f64])
    }

    /// Uniform during warmup, otherwise epsilon-greedy.
    pub fn explore_action(&self, obs: &[f64], warmup: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        if warmup || rng.random::<f64>() < self.epsilon {
            return Ok(vec![rng.random_range(0..self.n_actions) as f64]);
        }
        self.act(obs)
    }

    fn target(&self, r: f64, next: usize, terminal: bool) -> f64 {
        match (terminal, self.bootstrap) {
            (true, TerminalBootstrap::Zero) => r,
            (true, TerminalBootstrap::Absorbing) => r + self.gamma / (1.0 - self.gamma),
            (false, _) => {
                let a = self.argmax(&self.q_target[0], next);
                let i = next * self.n_actions + a;
                r + self.gamma * self.q_target[0][i].min(self.q_target[1][i])
            }
        }
    }

    /// Move both tables towards the shared target, item by item. Returns the
    /// mean squared TD error of `Q_A` before each move.
    pub fn critic_update(&mut self, batch: &RewardedBatch) -> Result<f64> {
        ensure(!batch.is_empty(), || "empty batch".into())?;
        let mut loss = 0.0;
        for i in 0..batch.len() {
            let s = state_index(batch.states.row(i).as_slice().unwrap())?;
            let next = state_index(batch.next_states.row(i).as_slice().unwrap())?;
            let a = batch.actions[[i, 0]] as usize;
            ensure(a < self.n_actions, || format!("action {a} out of range"))?;
            let y = self.target(batch.rewards[i], next, batch.terminal[i]);
            let idx = s * self.n_actions + a;
            loss += (y - self.q[0][idx]).powi(2);
            for table in &mut self.q {
                table[idx] += self.lr * (y - table[idx]);
                let peak = table[idx].abs();
                if !(peak <= self.divergence_limit) {
                    return Err(Error::Diverged { step: self.critic_updates, detail: format!("table entry {idx} = {}", table[idx]) });
                }
                self.q_abs_max = Some(self.q_abs_max.map_or(peak, |m| m.max(peak)));
            }
        }
        self.critic_updates += 1;
        Ok(loss / batch.len() as f64)
    }

    pub fn delayed_update(&mut self) {
        for (t, q) in self.q_target.iter_mut().zip(&self.q) {
            for (t, q) in t.iter_mut().zip(q) {
                *t += self.tau * (q - *t);
            }
        }
    }

    pub fn take_q_abs_max(&mut self) -> Option<f64> {
        self.q_abs_max.take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::BufferTag;
    use ndarray::Array2;

    fn one_hot_batch(items: &[(usize, usize, usize, f64, bool)], n_states: usize) -> RewardedBatch {
        let k = items.len();
        let mut states = Array2::zeros((k, n_states));
        let mut next_states = Array2::zeros((k, n_states));
        let mut actions = Array2::zeros((k, 1));
        for (i, (s, a, ns, _, _)) in items.iter().enumerate() {
            states[[i, *s]] = 1.0;
            next_states[[i, *ns]] = 1.0;
            actions[[i, 0]] = *a as f64;
        }
        RewardedBatch {
            states,
            actions,
            next_states,
            terminal: items.iter().map(|t| t.4).collect(),
            rewards: items.iter().map(|t| t.3).collect(),
            sources: items.iter().map(|t| if t.3 == 1.0 { BufferTag::Positive } else { BufferTag::Nil }).collect(),
        }
    }

    #[test]
    fn state_index_requires_one_hot() {
        assert_eq!(state_index(&[0.0, 1.0, 0.0]).unwrap(), 1);
        assert!(state_index(&[0.0, 0.5, 0.0]).is_err());
        assert!(state_index(&[1.0, 1.0]).is_err());
        assert!(state_index(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn terminal_targets() {
        let cfg = D2Config { tabular_lr: 1.0, ..D2Config::default() };
        let mut zero = TabularAgent::new(3, 2, &cfg, TerminalBootstrap::Zero).unwrap();
        zero.critic_update(&one_hot_batch(&[(0, 1, 2, 1.0, true)], 3)).unwrap();
        assert_eq!(zero.q(0, 0, 1), 1.0);
        let mut abs = TabularAgent::new(3, 2, &cfg, TerminalBootstrap::Absorbing).unwrap();
        abs.critic_update(&one_hot_batch(&[(0, 1, 2, 1.0, true)], 3)).unwrap();
        assert!((abs.q(0, 0, 1) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn greedy_breaks_ties_low_and_explores_uniformly_in_warmup() {
        let a = TabularAgent::new(2, 4, &D2Config::default(), TerminalBootstrap::Zero).unwrap();
        assert_eq!(a.greedy(1), 0);
        let mut r = crate::rng::from_seed(0);
        let mut counts = [0usize; 4];
        for _ in 0..4000 {
            counts[a.explore_action(&[1.0, 0.0], true, &mut r).unwrap()[0] as usize] += 1;
        }
        assert!(counts.iter().all(|c| (*c as f64 - 1000.0).abs() < 150.0), "{counts:?}");
    }

    #[test]
    fn runaway_values_abort() {
        let mut a = TabularAgent::new(2, 2, &D2Config::default(), TerminalBootstrap::Zero).unwrap();
        a.q[0][0] = 1e9;
        a.q[1][0] = 1e9;
        let err = a.critic_update(&one_hot_batch(&[(0, 0, 1, 0.0, false)], 2)).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }
}
