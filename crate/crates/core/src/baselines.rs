//! Behaviour cloning. The no-discriminator ablation lives with the trainer
//! ([`crate::agent::train_no_discriminator`]) since it shares the pipeline.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::agent::{evaluate, expert_mean, LogRow, TrainingLog, ACTOR_INIT_SCALE};
use crate::demos::DemoSet;
use crate::envs::{make_env, ActionSpace};
use crate::error::{contract, ensure, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Mlp, MlpSpec};
use crate::rng;

pub use crate::agent::train_no_discriminator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub actor_hidden: Vec<usize>,
    /// Tanh output scaled to the action box, as in the imitation actor.
    /// `false` gives an unbounded linear head.
    pub squash: bool,
    pub eval_episodes: usize,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            actor_hidden: vec![256, 256],
            squash: true,
            eval_episodes: 10,
        }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.batch_size >= 1 && self.eval_episodes >= 1, || "batch_size and eval_episodes must be positive".into())?;
        ensure(self.learning_rate > 0.0, || "learning_rate must be positive".into())
    }
}

#[derive(Debug, Clone)]
pub struct BcPolicy {
    pub actor: Mlp,
    pub action_space: ActionSpace,
    center: Array1<f64>,
    scale: Array1<f64>,
    pub final_mse: f64,
    pub updates: usize,
}

impl BcPolicy {
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let y = self.actor.forward(obs)?;
        let mut a: Vec<f64> = y.iter().zip(&self.center).zip(&self.scale).map(|((y, c), k)| c + k * y).collect();
        self.action_space.clip(&mut a);
        Ok(a)
    }

    /// Mean squared action error over every demonstrated pair.
    pub fn mse(&self, demos: &DemoSet) -> Result<f64> {
        let (x, y) = arrays(demos)?;
        let pred = self.actor.forward_batch(x.view())? * &self.scale + &self.center;
        Ok((pred - y).mapv(|d| d * d).mean().unwrap_or(0.0))
    }
}

fn arrays(demos: &DemoSet) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = demos.n_pairs();
    let mut x = Vec::with_capacity(n * demos.obs_dim);
    let mut y = Vec::with_capacity(n * demos.act_dim);
    for (s, a) in demos.pairs() {
        x.extend_from_slice(s);
        y.extend_from_slice(a);
    }
    let x = Array2::from_shape_vec((n, demos.obs_dim), x).map_err(|e| contract(e.to_string()))?;
    let y = Array2::from_shape_vec((n, demos.act_dim), y).map_err(|e| contract(e.to_string()))?;
    Ok((x, y))
}

/// Regress the actor onto the demonstrated actions by mean squared error,
/// reshuffling the pairs every epoch.
pub fn train_bc(demos: &DemoSet, action_space: &ActionSpace, cfg: &BcConfig, seed: u64) -> Result<BcPolicy> {
    cfg.validate()?;
    demos.validate()?;
    let ActionSpace::Continuous { .. } = action_space else {
        return Err(contract("behaviour cloning is implemented for continuous actions only"));
    };
    let act_dim = action_space.encoded_dim();
    ensure(act_dim == demos.act_dim, || "action space does not match the demonstrations".into())?;
    let output = if cfg.squash { Activation::Tanh } else { Activation::Identity };
    let spec = MlpSpec::new(demos.obs_dim, &cfg.actor_hidden, act_dim, Activation::Relu, output)?;
    let mut actor = Mlp::new(spec.clone(), ACTOR_INIT_SCALE, &mut rng::substream(seed, "bc/init"))?;
    let mut adam = AdamState::new(&spec, AdamConfig::with_lr(cfg.learning_rate));
    let (center, scale) = if cfg.squash {
        (Array1::from(action_space.center()), Array1::from(action_space.scale()))
    } else {
        (Array1::zeros(act_dim), Array1::ones(act_dim))
    };
    let (x, y) = arrays(demos)?;
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut shuffle = rng::substream(seed, "bc/shuffle");
    let mut updates = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let cache = actor.forward_cached(xb.view())?;
            let pred = cache.output() * &scale + &center;
            let n = (chunk.len() * act_dim) as f64;
            let upstream = (pred - yb) * &scale * (2.0 / n);
            let (grads, _) = actor.backward_batch(&cache, upstream.view())?;
            adam.step(&mut actor.params, &grads)?;
            updates += 1;
        }
    }
    let mut policy = BcPolicy { actor, action_space: action_space.clone(), center, scale, final_mse: 0.0, updates };
    policy.final_mse = policy.mse(demos)?;
    Ok(policy)
}

/// Train, then evaluate once; the log holds a single row at the number of
/// gradient updates.
pub fn run_bc(demos: &DemoSet, cfg: &BcConfig, seed: u64) -> Result<(BcPolicy, TrainingLog)> {
    let mut env = make_env(&demos.env_id)?;
    let space = env.spec().action_space.clone();
    let policy = train_bc(demos, &space, cfg, seed)?;
    let (ret, std) = evaluate(env.as_mut(), |o| policy.act(o), cfg.eval_episodes, rng::substream_seed(seed, "eval"))?;
    let row = LogRow {
        step: policy.updates,
        eval_return: ret,
        normalized_return: ret / expert_mean(&demos.env_id)?,
        critic_loss: None,
        actor_loss: Some(policy.final_mse),
        bplus_size: 0,
        bplus_online_frac: 0.0,
        route_positive_rate: None,
        method: "bc".into(),
        seed,
        eval_return_std: std,
        q_abs_max: None,
    };
    Ok((policy, TrainingLog { rows: vec![row] }))
}
