//! The imitation trainer: seed B⁺ with demonstrations, collect with the
//! current policy, route each transition through a predicate, and learn a
//! critic on constant `{0, 1}` rewards.

mod config;
mod continuous;
mod log;
mod tabular;

pub use config::{D2Config, TerminalBootstrap, Q_BOUND_FACTOR};
pub use continuous::{deterministic_policy_gradient, state_action, ContinuousAgent, ACTOR_INIT_SCALE};
pub use log::{LogRow, TrainingLog, CSV_COLUMNS};
pub use tabular::{state_index, TabularAgent};

use crate::demos::DemoSet;
use crate::disc::{make_negatives, DiscConfig, Discriminator, PretrainReport};
use crate::envs::{episode_seed, evaluate_policy, expert_mean_return, make_env, ActionSpace, Env, EnvSpec, RewardFreeEnv};
use crate::error::{contract, Error, Result};
use crate::replay::{ConstantPredicate, PartitionedReplay, RewardedBatch, RoutePredicate, Transition};
use crate::rng::{self, Rng};

#[derive(Debug, Clone)]
pub enum Agent {
    Continuous(Box<ContinuousAgent>),
    Tabular(TabularAgent),
}

impl Agent {
    pub fn new(spec: &EnvSpec, cfg: &D2Config, bootstrap: TerminalBootstrap, rng: &mut Rng) -> Result<Self> {
        Ok(match &spec.action_space {
            ActionSpace::Discrete { n } => Agent::Tabular(TabularAgent::new(spec.obs_dim, *n, cfg, bootstrap)?),
            space @ ActionSpace::Continuous { .. } => {
                Agent::Continuous(Box::new(ContinuousAgent::new(spec.obs_dim, space.clone(), cfg, bootstrap, rng)?))
            }
        })
    }

    /// The deterministic evaluation policy.
    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Agent::Continuous(a) => a.act(obs),
            Agent::Tabular(a) => a.act(obs),
        }
    }

    pub fn explore_action(&self, obs: &[f64], warmup: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        match self {
            Agent::Continuous(a) => a.explore_action(obs, warmup, rng),
            Agent::Tabular(a) => a.explore_action(obs, warmup, rng),
        }
    }

    pub fn critic_update(&mut self, batch: &RewardedBatch, rng: &mut Rng) -> Result<f64> {
        match self {
            Agent::Continuous(a) => a.critic_update(batch, rng),
            Agent::Tabular(a) => a.critic_update(batch),
        }
    }

    /// Actor step (if any) and target updates; returns the actor loss.
    pub fn delayed_update(&mut self, batch: &RewardedBatch) -> Result<Option<f64>> {
        match self {
            Agent::Continuous(a) => a.delayed_update(batch.states.view()).map(Some),
            Agent::Tabular(a) => {
                a.delayed_update();
                Ok(None)
            }
        }
    }

    pub fn critic_updates(&self) -> usize {
        match self {
            Agent::Continuous(a) => a.critic_updates(),
            Agent::Tabular(a) => a.critic_updates(),
        }
    }

    fn take_q_abs_max(&mut self) -> Option<f64> {
        match self {
            Agent::Continuous(a) => a.take_q_abs_max(),
            Agent::Tabular(a) => a.take_q_abs_max(),
        }
    }
}

/// Mean and std of the true return of `policy` over `n` seeded episodes.
pub fn evaluate<F>(env: &mut dyn Env, policy: F, n: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let fallback = env.spec().action_space.center();
    let mut failure = None;
    let out = evaluate_policy(
        env,
        |obs| {
            policy(obs).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                fallback.clone()
            })
        },
        n,
        seed,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

pub fn expert_mean(env_id: &str) -> Result<f64> {
    expert_mean_return(env_id).ok_or_else(|| contract(format!("no expert calibration for {env_id:?}")))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainingLog,
    pub agent: Agent,
    pub replay: PartitionedReplay,
}

/// Negatives and pretraining for the demonstrations' environment, seeded
/// from the run's master seed.
pub fn pretrain_discriminator(demos: &DemoSet, cfg: &DiscConfig, seed: u64) -> Result<(Discriminator, PretrainReport)> {
    let seed = rng::substream_seed(seed, "discriminator");
    let space = make_env(&demos.env_id)?.spec().action_space.clone();
    let samples = make_negatives(demos, &space, cfg.n_per_state, seed)?;
    Discriminator::new(demos.obs_dim, space, cfg, seed)?.pretrain(&samples, cfg, seed)
}

/// D2 proper: route through the frozen discriminator.
pub fn train(cfg: &D2Config, demos: &DemoSet, disc: &Discriminator, seed: u64) -> Result<TrainOutcome> {
    if !disc.is_trained() {
        return Err(contract("discriminator has not been pretrained"));
    }
    train_with_predicate(cfg, demos, disc, seed, "d2")
}

/// Ablation: every online transition goes to B⁰.
pub fn train_no_discriminator(cfg: &D2Config, demos: &DemoSet, seed: u64) -> Result<TrainOutcome> {
    train_with_predicate(cfg, demos, &ConstantPredicate(false), seed, "no_disc")
}

#[derive(Default)]
struct Interval {
    critic_loss: f64,
    critic_n: usize,
    actor_loss: f64,
    actor_n: usize,
    routed0: u64,
    positive0: u64,
}

/// The shared pipeline; methods differ only in `predicate`.
pub fn train_with_predicate(
    cfg: &D2Config,
    demos: &DemoSet,
    predicate: &dyn RoutePredicate,
    seed: u64,
    method: &str,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    demos.validate()?;
    let env_id = demos.env_id.as_str();
    let mut env = RewardFreeEnv::new(make_env(env_id)?);
    let spec = env.spec().clone();
    let mut eval_env = make_env(env_id)?;
    let expert = expert_mean(env_id)?;

    let mut agent = Agent::new(&spec, cfg, cfg.bootstrap_for(env_id), &mut rng::substream(seed, "agent/init"))?;
    let mut replay = PartitionedReplay::new(env_id, spec.obs_dim, spec.act_dim, cfg.replay_config())?;
    replay.seed_with_demos(demos)?;

    let mut explore_rng = rng::substream(seed, "explore");
    let mut sample_rng = rng::substream(seed, "replay");
    let mut noise_rng = rng::substream(seed, "agent/target_noise");
    let env_seed = rng::substream_seed(seed, "env");
    let eval_seed = rng::substream_seed(seed, "eval");
    let q_limit = Q_BOUND_FACTOR * cfg.value_bound();

    let mut log = TrainingLog::default();
    let mut interval = Interval::default();
    let mut checkpoint = |step: usize, agent: &mut Agent, replay: &PartitionedReplay, interval: &mut Interval| -> Result<()> {
        let (ret, std) = evaluate(eval_env.as_mut(), |o| agent.act(o), cfg.eval_episodes, eval_seed)?;
        let q_abs_max = agent.take_q_abs_max();
        if let Some(q) = q_abs_max.filter(|q| cfg.strict_q_bound && *q > q_limit) {
            return Err(Error::Diverged { step, detail: format!("|Q| = {q:.4} exceeds {q_limit:.4} at evaluation") });
        }
        let stats = replay.stats();
        let routed = stats.routed - interval.routed0;
        let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
        log.rows.push(LogRow {
            step,
            eval_return: ret,
            normalized_return: ret / expert,
            critic_loss: mean(interval.critic_loss, interval.critic_n),
            actor_loss: mean(interval.actor_loss, interval.actor_n),
            bplus_size: stats.bplus_size,
            bplus_online_frac: stats.bplus_online_frac,
            route_positive_rate: (routed > 0).then(|| (stats.predicted_positive - interval.positive0) as f64 / routed as f64),
            method: method.to_string(),
            seed,
            eval_return_std: std,
            q_abs_max,
        });
        *interval = Interval { routed0: stats.routed, positive0: stats.predicted_positive, ..Interval::default() };
        Ok(())
    };
    checkpoint(0, &mut agent, &replay, &mut interval)?;

    let mut episode = 0;
    let mut obs = env.reset(episode_seed(env_seed, episode));
    let mut collected = 0usize;
    for step in 1..=cfg.total_steps {
        if step > cfg.no_collect_steps {
            let action = agent.explore_action(&obs, collected < cfg.warmup_steps, &mut explore_rng)?;
            let out = env.step(&action)?;
            let next = if out.terminal || out.truncated {
                episode += 1;
                env.reset(episode_seed(env_seed, episode))
            } else {
                out.next_state.clone()
            };
            let state = std::mem::replace(&mut obs, next);
            replay.route(predicate, Transition { state, action, next_state: out.next_state, terminal: out.terminal })?;
            collected += 1;
        }
        let batch = replay.sample_batch(cfg.batch_size, cfg.positive_fraction, &mut sample_rng)?;
        interval.critic_loss += agent.critic_update(&batch, &mut noise_rng)?;
        interval.critic_n += 1;
        if agent.critic_updates() % cfg.policy_delay == 0 {
            if let Some(loss) = agent.delayed_update(&batch)? {
                interval.actor_loss += loss;
                interval.actor_n += 1;
            }
        }
        if step % cfg.eval_interval == 0 || step == cfg.total_steps {
            checkpoint(step, &mut agent, &replay, &mut interval)?;
        }
    }
    Ok(TrainOutcome { log, agent, replay })
}
