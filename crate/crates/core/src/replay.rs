//! Positive/nil replay partition with constant rewards assigned at sample time.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::demos::DemoSet;
use crate::disc::Discriminator;
use crate::error::{contract, ensure, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferTag {
    Positive,
    Nil,
}

/// Decides whether an online transition belongs in the positive buffer.
pub trait RoutePredicate {
    fn is_positive(&self, state: &[f64], action: &[f64]) -> Result<bool>;
}

impl RoutePredicate for Discriminator {
    fn is_positive(&self, state: &[f64], action: &[f64]) -> Result<bool> {
        Discriminator::is_positive(self, state, action)
    }
}

/// Always answers the same; `ConstantPredicate(false)` sends every online
/// transition to the nil buffer.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredicate(pub bool);

impl RoutePredicate for ConstantPredicate {
    fn is_positive(&self, _: &[f64], _: &[f64]) -> Result<bool> {
        Ok(self.0)
    }
}

/// What happens to an accepted online transition when B⁺ is at its cap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapOverflow {
    /// Store it in B⁰ instead.
    #[default]
    Reroute,
    /// Replace the oldest online entry of B⁺, leaving the share unchanged.
    EvictOldest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplayConfig {
    pub online_fraction_cap: f64,
    pub online_capacity: usize,
    pub nil_capacity: usize,
    pub cap_overflow: CapOverflow,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            online_fraction_cap: 0.25,
            online_capacity: 100_000,
            nil_capacity: 1_000_000,
            cap_overflow: CapOverflow::Reroute,
        }
    }
}

/// Cumulative routing counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RouteCounts {
    pub routed: u64,
    /// Transitions the predicate accepted, whether or not the cap admitted them.
    pub predicted_positive: u64,
    pub to_positive: u64,
    pub cap_rerouted: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayStats {
    pub bplus_size: usize,
    pub bplus_demo: usize,
    pub bplus_online: usize,
    pub bplus_online_frac: f64,
    pub bnil_size: usize,
    pub routed: u64,
    pub predicted_positive: u64,
    pub to_positive: u64,
    pub cap_rerouted: u64,
}

/// Columns of a sampled batch, with rewards fixed by the source buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardedBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub next_states: Array2<f64>,
    pub terminal: Vec<bool>,
    pub rewards: Vec<f64>,
    pub sources: Vec<BufferTag>,
}

impl RewardedBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PartitionedReplay {
    env_id: String,
    obs_dim: usize,
    act_dim: usize,
    config: ReplayConfig,
    demo: Vec<Transition>,
    online: VecDeque<Transition>,
    nil: VecDeque<Transition>,
    seeded: bool,
    counts: RouteCounts,
}

impl PartitionedReplay {
    pub fn new(env_id: &str, obs_dim: usize, act_dim: usize, config: ReplayConfig) -> Result<Self> {
        ensure((0.0..=1.0).contains(&config.online_fraction_cap), || "online_fraction_cap must lie in [0, 1]".into())?;
        ensure(config.nil_capacity >= 1, || "nil_capacity must be positive".into())?;
        Ok(Self {
            env_id: env_id.to_string(),
            obs_dim,
            act_dim,
            config,
            demo: Vec::new(),
            online: VecDeque::new(),
            nil: VecDeque::new(),
            seeded: false,
            counts: RouteCounts::default(),
        })
    }

    pub fn seed_with_demos(&mut self, demos: &DemoSet) -> Result<()> {
        ensure(!self.seeded && self.positive_len() == 0 && self.nil.is_empty(), || "replay already seeded".into())?;
        ensure(demos.env_id == self.env_id, || {
            format!("demos are for {:?}, replay is for {:?}", demos.env_id, self.env_id)
        })?;
        ensure(demos.obs_dim == self.obs_dim && demos.act_dim == self.act_dim, || "demo dimensions mismatch".into())?;
        for t in &demos.trajectories {
            for k in 0..t.len().saturating_sub(1) {
                self.demo.push(Transition {
                    state: t.states[k].clone(),
                    action: t.actions[k].clone(),
                    next_state: t.states[k + 1].clone(),
                    terminal: false,
                });
            }
            if let Some(last) = &t.terminal_state {
                let k = t.len() - 1;
                self.demo.push(Transition {
                    state: t.states[k].clone(),
                    action: t.actions[k].clone(),
                    next_state: last.clone(),
                    terminal: true,
                });
            }
        }
        ensure(!self.demo.is_empty(), || "demonstrations produced no transitions".into())?;
        self.seeded = true;
        Ok(())
    }

    pub fn positive_len(&self) -> usize {
        self.demo.len() + self.online.len()
    }

    pub fn nil_len(&self) -> usize {
        self.nil.len()
    }

    pub fn demo_transitions(&self) -> &[Transition] {
        &self.demo
    }

    pub fn online_positive_len(&self) -> usize {
        self.online.len()
    }

    /// Whether one more online entry keeps the online share of B⁺ within the cap.
    fn cap_admits(&self) -> bool {
        if self.online.len() >= self.config.online_capacity && self.config.online_capacity > 0 {
            // Full: the new entry replaces the oldest, the share is unchanged.
            return true;
        }
        let size = (self.positive_len() + 1) as f64;
        (self.online.len() + 1) as f64 <= (self.config.online_fraction_cap * size).floor()
    }

    pub fn push_nil(&mut self, t: Transition) {
        if self.nil.len() == self.config.nil_capacity {
            self.nil.pop_front();
        }
        self.nil.push_back(t);
    }

    fn push_online_positive(&mut self, t: Transition) {
        if self.online.len() == self.config.online_capacity {
            self.online.pop_front();
        }
        self.online.push_back(t);
    }

    pub fn route(&mut self, predicate: &dyn RoutePredicate, t: Transition) -> Result<BufferTag> {
        ensure(t.state.len() == self.obs_dim && t.next_state.len() == self.obs_dim && t.action.len() == self.act_dim, || {
            "transition dimensions mismatch".into()
        })?;
        self.counts.routed += 1;
        if predicate.is_positive(&t.state, &t.action)? {
            self.counts.predicted_positive += 1;
            if self.config.online_capacity > 0 && self.cap_admits() {
                self.counts.to_positive += 1;
                self.push_online_positive(t);
                return Ok(BufferTag::Positive);
            }
            if self.config.cap_overflow == CapOverflow::EvictOldest && !self.online.is_empty() {
                self.counts.to_positive += 1;
                self.online.pop_front();
                self.online.push_back(t);
                return Ok(BufferTag::Positive);
            }
            self.counts.cap_rerouted += 1;
        }
        self.push_nil(t);
        Ok(BufferTag::Nil)
    }

    fn positive_at(&self, i: usize) -> &Transition {
        if i < self.demo.len() {
            &self.demo[i]
        } else {
            &self.online[i - self.demo.len()]
        }
    }

    /// Uniform draws with replacement: `round(batch_size * positive_fraction)`
    /// from B⁺ and the rest from B⁰, or everything from B⁺ while B⁰ is empty.
    pub fn sample_batch(&self, batch_size: usize, positive_fraction: f64, rng: &mut Rng) -> Result<RewardedBatch> {
        if batch_size == 0 {
            return Err(contract("batch_size must be positive"));
        }
        ensure((0.0..=1.0).contains(&positive_fraction), || "positive_fraction must lie in [0, 1]".into())?;
        ensure(self.positive_len() > 0, || "positive buffer is empty; seed with demos first".into())?;
        let n_pos = if self.nil.is_empty() {
            batch_size
        } else {
            (batch_size as f64 * positive_fraction).round() as usize
        };
        let mut states = Array2::zeros((batch_size, self.obs_dim));
        let mut actions = Array2::zeros((batch_size, self.act_dim));
        let mut next_states = Array2::zeros((batch_size, self.obs_dim));
        let mut terminal = Vec::with_capacity(batch_size);
        let mut rewards = Vec::with_capacity(batch_size);
        let mut sources = Vec::with_capacity(batch_size);
        for i in 0..batch_size {
            let (t, tag) = if i < n_pos {
                (self.positive_at(rng.random_range(0..self.positive_len())), BufferTag::Positive)
            } else {
                (&self.nil[rng.random_range(0..self.nil.len())], BufferTag::Nil)
            };
            states.row_mut(i).iter_mut().zip(&t.state).for_each(|(d, s)| *d = *s);
            actions.row_mut(i).iter_mut().zip(&t.action).for_each(|(d, s)| *d = *s);
            next_states.row_mut(i).iter_mut().zip(&t.next_state).for_each(|(d, s)| *d = *s);
            terminal.push(t.terminal);
            rewards.push(if tag == BufferTag::Positive { 1.0 } else { 0.0 });
            sources.push(tag);
        }
        Ok(RewardedBatch { states, actions, next_states, terminal, rewards, sources })
    }

    pub fn route_counts(&self) -> RouteCounts {
        self.counts
    }

    pub fn stats(&self) -> ReplayStats {
        let size = self.positive_len();
        ReplayStats {
            bplus_size: size,
            bplus_demo: self.demo.len(),
            bplus_online: self.online.len(),
            bplus_online_frac: if size == 0 { 0.0 } else { self.online.len() as f64 / size as f64 },
            bnil_size: self.nil.len(),
            routed: self.counts.routed,
            predicted_positive: self.counts.predicted_positive,
            to_positive: self.counts.to_positive,
            cap_rerouted: self.counts.cap_rerouted,
        }
    }
}
