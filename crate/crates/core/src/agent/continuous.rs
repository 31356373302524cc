//! Deterministic actor with twin critics, delayed target updates and
//! clipped target-policy smoothing.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::config::{D2Config, TerminalBootstrap};
use crate::envs::ActionSpace;
use crate::error::{contract, ensure, Error, Result};
use crate::nn::{target_update, Activation, AdamConfig, AdamState, Mlp, MlpParams, MlpSpec, TargetUpdate};
use crate::replay::RewardedBatch;
use crate::rng::Rng;

/// Final-layer init scale of actors, so untrained policies act near the
/// centre of the action box.
pub const ACTOR_INIT_SCALE: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct ContinuousAgent {
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    actor_target: Mlp,
    critic_targets: [Mlp; 2],
    actor_opt: AdamState,
    critic_opts: [AdamState; 2],
    action_space: ActionSpace,
    center: Array1<f64>,
    scale: Array1<f64>,
    gamma: f64,
    tau: f64,
    exploration_sigma: f64,
    target_noise: f64,
    target_noise_clip: f64,
    bootstrap: TerminalBootstrap,
    divergence_limit: f64,
    critic_updates: usize,
    q_abs_max: Option<f64>,
}

/// Concatenate states and actions column-wise.
pub fn state_action(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
    concatenate(Axis(1), &[states, actions]).map_err(|e| contract(e.to_string()))
}

/// Gradient of `-mean_i Q(s_i, c + k * actor(s_i))` with respect to the
/// actor's parameters. `critic` returns `Q` and `dQ/da` for a batch.
pub fn deterministic_policy_gradient<F>(
    actor: &Mlp,
    center: &Array1<f64>,
    scale: &Array1<f64>,
    states: ArrayView2<f64>,
    critic: F,
) -> Result<(f64, MlpParams)>
where
    F: FnOnce(ArrayView2<f64>, ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)>,
{
    let cache = actor.forward_cached(states)?;
    let actions = cache.output() * scale + center;
    let (q, dq_da) = critic(states, actions.view())?;
    let n = states.nrows() as f64;
    let upstream = dq_da * scale * (-1.0 / n);
    let (grads, _) = actor.backward_batch(&cache, upstream.view())?;
    Ok((-q.mean().unwrap_or(0.0), grads))
}

impl ContinuousAgent {
    pub fn new(obs_dim: usize, action_space: ActionSpace, cfg: &D2Config, bootstrap: TerminalBootstrap, rng: &mut Rng) -> Result<Self> {
        let ActionSpace::Continuous { .. } = &action_space else {
            return Err(contract("continuous agent needs a continuous action space"));
        };
        let act_dim = action_space.encoded_dim();
        let actor_spec = MlpSpec::new(obs_dim, &cfg.actor_hidden, act_dim, Activation::Relu, Activation::Tanh)?;
        let critic_spec = MlpSpec::new(obs_dim + act_dim, &cfg.critic_hidden, 1, Activation::Relu, Activation::Identity)?;
        let actor = Mlp::new(actor_spec.clone(), ACTOR_INIT_SCALE, rng)?;
        let critics = [Mlp::new(critic_spec.clone(), 1.0, rng)?, Mlp::new(critic_spec.clone(), 1.0, rng)?];
        Ok(Self {
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor_opt: AdamState::new(&actor_spec, AdamConfig::with_lr(cfg.actor_lr)),
            critic_opts: [
                AdamState::new(&critic_spec, AdamConfig::with_lr(cfg.critic_lr)),
                AdamState::new(&critic_spec, AdamConfig::with_lr(cfg.critic_lr)),
            ],
            center: Array1::from(action_space.center()),
            scale: Array1::from(action_space.scale()),
            action_space,
            actor,
            critics,
            gamma: cfg.gamma,
            tau: cfg.polyak_tau,
            exploration_sigma: cfg.exploration_sigma,
            target_noise: cfg.target_noise,
            target_noise_clip: cfg.target_noise_clip,
            bootstrap,
            divergence_limit: cfg.divergence_factor * cfg.value_bound(),
            critic_updates: 0,
            q_abs_max: None,
        })
    }

    pub fn center(&self) -> &Array1<f64> {
        &self.center
    }

    pub fn scale(&self) -> &Array1<f64> {
        &self.scale
    }

    pub fn critic_updates(&self) -> usize {
        self.critic_updates
    }

    fn policy_batch(&self, actor: &Mlp, states: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(actor.forward_batch(states)? * &self.scale + &self.center)
    }

    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let y = self.actor.forward(obs)?;
        let mut a: Vec<f64> = y.iter().zip(&self.center).zip(&self.scale).map(|((y, c), k)| c + k * y).collect();
        self.action_space.clip(&mut a);
        Ok(a)
    }

    /// Uniform over the box during warmup, otherwise `μ(s)` plus Gaussian
    /// noise of std `exploration_sigma` times the half-range, clipped.
    pub fn explore_action(&self, obs: &[f64], warmup: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        if warmup {
            return Ok(self.action_space.sample_uniform(rng));
        }
        let mut a = self.act(obs)?;
        if self.exploration_sigma > 0.0 {
            for (a, k) in a.iter_mut().zip(&self.scale) {
                let z: f64 = rng.sample(StandardNormal);
                *a += z * self.exploration_sigma * k;
            }
        }
        self.action_space.clip(&mut a);
        Ok(a)
    }

    /// Critic values at the batch's own `(s, a)` pairs, one column per critic.
    pub fn q_values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<[Array1<f64>; 2]> {
        let x = state_action(states, actions)?;
        let q = |net: &Mlp| -> Result<Array1<f64>> { Ok(net.forward_batch(x.view())?.column(0).to_owned()) };
        Ok([q(&self.critics[0])?, q(&self.critics[1])?])
    }

    /// Regression targets `r + γ (1 - done) min(Q'_A, Q'_B)(s', μ'(s') + ε)`.
    pub fn targets(&self, batch: &RewardedBatch, rng: &mut Rng) -> Result<Array1<f64>> {
        let mut next = self.policy_batch(&self.actor_target, batch.next_states.view())?;
        if self.target_noise > 0.0 {
            for mut row in next.rows_mut() {
                for (j, a) in row.iter_mut().enumerate() {
                    let k = self.scale[j];
                    let z: f64 = rng.sample(StandardNormal);
                    let eps = (z * self.target_noise * k).clamp(-self.target_noise_clip * k, self.target_noise_clip * k);
                    *a += eps;
                }
                let mut a = row.to_vec();
                self.action_space.clip(&mut a);
                row.iter_mut().zip(a).for_each(|(d, v)| *d = v);
            }
        }
        let x = state_action(batch.next_states.view(), next.view())?;
        let q1 = self.critic_targets[0].forward_batch(x.view())?;
        let q2 = self.critic_targets[1].forward_batch(x.view())?;
        let y: Array1<f64> = (0..batch.len())
            .map(|i| match (batch.terminal[i], self.bootstrap) {
                (true, TerminalBootstrap::Zero) => batch.rewards[i],
                (true, TerminalBootstrap::Absorbing) => batch.rewards[i] + self.gamma / (1.0 - self.gamma),
                (false, _) => batch.rewards[i] + self.gamma * q1[[i, 0]].min(q2[[i, 0]]),
            })
            .collect();
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite critic target at batch row {i}: s'={:?} r={} terminal={}",
                batch.next_states.row(i).to_vec(),
                batch.rewards[i],
                batch.terminal[i]
            )));
        }
        Ok(y)
    }

    /// One Adam step on each critic towards the shared targets; returns the
    /// mean of the two squared-error losses.
    pub fn critic_update(&mut self, batch: &RewardedBatch, rng: &mut Rng) -> Result<f64> {
        ensure(!batch.is_empty(), || "empty batch".into())?;
        let y = self.targets(batch, rng)?;
        let x = state_action(batch.states.view(), batch.actions.view())?;
        let n = batch.len() as f64;
        let mut total = 0.0;
        for k in 0..2 {
            let cache = self.critics[k].forward_cached(x.view())?;
            let q = cache.output().column(0).to_owned();
            let peak = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(peak <= self.divergence_limit) {
                return Err(Error::Diverged {
                    step: self.critic_updates,
                    detail: format!("critic {k} reached |Q| = {peak:.4e} (limit {:.4e})", self.divergence_limit),
                });
            }
            self.q_abs_max = Some(self.q_abs_max.map_or(peak, |m| m.max(peak)));
            let diff = &q - &y;
            total += diff.mapv(|d| d * d).sum() / n;
            let upstream = diff.mapv(|d| 2.0 * d / n).insert_axis(Axis(1));
            let (grads, _) = self.critics[k].backward_batch(&cache, upstream.view())?;
            self.critic_opts[k].step(&mut self.critics[k].params, &grads)?;
        }
        self.critic_updates += 1;
        Ok(total / 2.0)
    }

    /// Loss `-mean Q_A(s, μ(s))` and its gradient with respect to the actor.
    pub fn actor_gradient(&self, states: ArrayView2<f64>) -> Result<(f64, MlpParams)> {
        let critic = &self.critics[0];
        let obs_dim = states.ncols();
        deterministic_policy_gradient(&self.actor, &self.center, &self.scale, states, |s, a| {
            let x = state_action(s, a)?;
            let cache = critic.forward_cached(x.view())?;
            let q = cache.output().column(0).to_owned();
            let ones = Array2::ones((s.nrows(), 1));
            let (_, dx) = critic.backward_batch(&cache, ones.view())?;
            Ok((q, dx.slice(ndarray::s![.., obs_dim..]).to_owned()))
        })
    }

    /// Actor ascent step followed by Polyak updates of all targets.
    pub fn delayed_update(&mut self, states: ArrayView2<f64>) -> Result<f64> {
        ensure(self.critic_updates > 0, || "actor update before any critic update".into())?;
        let (loss, grads) = self.actor_gradient(states)?;
        self.actor_opt.step(&mut self.actor.params, &grads)?;
        let mode = TargetUpdate::Polyak { tau: self.tau };
        target_update(&self.actor.params, &mut self.actor_target.params, mode)?;
        for k in 0..2 {
            target_update(&self.critics[k].params, &mut self.critic_targets[k].params, mode)?;
        }
        Ok(loss)
    }

    pub fn take_q_abs_max(&mut self) -> Option<f64> {
        self.q_abs_max.take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::BufferTag;
    use crate::rng;
    use ndarray::{array, Array2};

    fn small_cfg() -> D2Config {
        D2Config { actor_hidden: vec![8, 8], critic_hidden: vec![8, 8], ..D2Config::default() }
    }

    fn agent(bootstrap: TerminalBootstrap) -> ContinuousAgent {
        let space = ActionSpace::Continuous { low: vec![-1.0, -1.0], high: vec![1.0, 1.0] };
        ContinuousAgent::new(4, space, &small_cfg(), bootstrap, &mut rng::from_seed(0)).unwrap()
    }

    fn batch(rows: usize, reward: f64, terminal: bool) -> RewardedBatch {
        let mut r = rng::from_seed(3);
        let mut m = |c: usize| Array2::from_shape_fn((rows, c), |_| rng::Rng::random_range(&mut r, -1.0..1.0));
        let states = m(4);
        let actions = Array2::from_shape_fn((rows, 2), |(i, j)| states[[i, j]] * 0.5);
        let next_states = states.mapv(|v| v * 0.9);
        let tag = if reward == 1.0 { BufferTag::Positive } else { BufferTag::Nil };
        RewardedBatch { states, actions, next_states, terminal: vec![terminal; rows], rewards: vec![reward; rows], sources: vec![tag; rows] }
    }

    fn zero_critics(a: &mut ContinuousAgent) {
        for net in a.critics.iter_mut().chain(a.critic_targets.iter_mut()) {
            net.params.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn terminal_positive_target_is_one() {
        let a = agent(TerminalBootstrap::Zero);
        let y = a.targets(&batch(5, 1.0, true), &mut rng::from_seed(1)).unwrap();
        assert!(y.iter().all(|v| *v == 1.0));
        let a = agent(TerminalBootstrap::Absorbing);
        let y = a.targets(&batch(5, 1.0, true), &mut rng::from_seed(1)).unwrap();
        assert!(y.iter().all(|v| (*v - 100.0).abs() < 1e-9));
    }

    #[test]
    fn zero_reward_on_zero_critics_is_a_fixed_point() {
        let mut a = agent(TerminalBootstrap::Zero);
        zero_critics(&mut a);
        let b = batch(16, 0.0, false);
        assert!(a.targets(&b, &mut rng::from_seed(1)).unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(a.critic_update(&b, &mut rng::from_seed(1)).unwrap(), 0.0);
    }

    #[test]
    fn zero_critic_gives_zero_actor_gradient() {
        let mut a = agent(TerminalBootstrap::Zero);
        zero_critics(&mut a);
        let (loss, g) = a.actor_gradient(batch(10, 1.0, false).states.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn actor_update_needs_a_critic_update_first() {
        let mut a = agent(TerminalBootstrap::Zero);
        assert!(a.delayed_update(batch(4, 1.0, false).states.view()).is_err());
    }

    #[test]
    fn quadratic_critic_pulls_a_linear_actor_to_the_optimum() {
        // Q(s, a) = -(a - a*)^2 with a* = 0.3, actor a = w s + b.
        let target = 0.3;
        let spec = MlpSpec::new(1, &[], 1, Activation::Relu, Activation::Identity).unwrap();
        let mut actor = Mlp::new(spec.clone(), 1.0, &mut rng::from_seed(4)).unwrap();
        let states = array![[-1.0], [-0.5], [0.2], [0.9]];
        let (c, k) = (Array1::zeros(1), Array1::ones(1));
        let critic = |_: ArrayView2<f64>, a: ArrayView2<f64>| -> Result<(Array1<f64>, Array2<f64>)> {
            Ok((a.column(0).mapv(|v| -(v - target) * (v - target)), a.mapv(|v| -2.0 * (v - target))))
        };
        let gap = |actor: &Mlp| {
            actor.forward_batch(states.view()).unwrap().iter().map(|v| (v - target).abs()).sum::<f64>()
        };
        // Closed form: dL/dw = mean(2 (a - a*) s), dL/db = mean(2 (a - a*)).
        let (_, g) = deterministic_policy_gradient(&actor, &c, &k, states.view(), critic).unwrap();
        let a = actor.forward_batch(states.view()).unwrap();
        let dw = (0..4).map(|i| 2.0 * (a[[i, 0]] - target) * states[[i, 0]]).sum::<f64>() / 4.0;
        let db = (0..4).map(|i| 2.0 * (a[[i, 0]] - target)).sum::<f64>() / 4.0;
        assert!((g.layers[0].weight[[0, 0]] - dw).abs() < 1e-12);
        assert!((g.layers[0].bias[0] - db).abs() < 1e-12);

        let before = gap(&actor);
        let mut adam = AdamState::new(&spec, AdamConfig::with_lr(1e-2));
        for _ in 0..2000 {
            let (_, g) = deterministic_policy_gradient(&actor, &c, &k, states.view(), critic).unwrap();
            adam.step(&mut actor.params, &g).unwrap();
        }
        assert!(gap(&actor) < before * 1e-2, "{} -> {}", before, gap(&actor));
    }

    #[test]
    fn composed_actor_gradient_matches_finite_differences() {
        let a = agent(TerminalBootstrap::Zero);
        let states = batch(6, 1.0, false).states;
        let loss = |actor: &Mlp| -> f64 {
            let act = actor.forward_batch(states.view()).unwrap() * &a.scale + &a.center;
            let x = state_action(states.view(), act.view()).unwrap();
            -a.critics[0].forward_batch(x.view()).unwrap().mean().unwrap()
        };
        let (l0, g) = a.actor_gradient(states.view()).unwrap();
        assert!((l0 - loss(&a.actor)).abs() < 1e-12);
        let analytic = g.to_vec();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..analytic.len() {
            let mut plus = a.actor.clone();
            let mut minus = a.actor.clone();
            *plus.params.iter_mut().nth(i).unwrap() += h;
            *minus.params.iter_mut().nth(i).unwrap() -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn exploration_contracts() {
        let space = ActionSpace::Continuous { low: vec![-1.0, -2.0], high: vec![1.0, 2.0] };
        let quiet = D2Config { exploration_sigma: 0.0, ..small_cfg() };
        let a = ContinuousAgent::new(3, space.clone(), &quiet, TerminalBootstrap::Zero, &mut rng::from_seed(0)).unwrap();
        let s = [0.3, -0.2, 0.5];
        assert_eq!(a.explore_action(&s, false, &mut rng::from_seed(1)).unwrap(), a.act(&s).unwrap());

        let loud = D2Config { exploration_sigma: 3.0, ..small_cfg() };
        let a = ContinuousAgent::new(3, space.clone(), &loud, TerminalBootstrap::Zero, &mut rng::from_seed(0)).unwrap();
        let mut r = rng::from_seed(2);
        for _ in 0..100_000 {
            assert!(space.contains(&a.explore_action(&s, false, &mut r).unwrap()));
        }
    }

    /// Kolmogorov-Smirnov p-value of `xs` against Uniform(lo, hi), using the
    /// asymptotic Kolmogorov distribution.
    fn ks_uniform_p(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = (x - lo) / (hi - lo);
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max);
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let p: f64 = (1..=100).map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        }).sum();
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn warmup_actions_are_uniform_over_the_box() {
        let space = ActionSpace::Continuous { low: vec![-1.0, -2.0], high: vec![1.0, 2.0] };
        let a = ContinuousAgent::new(3, space, &small_cfg(), TerminalBootstrap::Zero, &mut rng::from_seed(0)).unwrap();
        let mut r = rng::from_seed(7);
        let draws: Vec<Vec<f64>> = (0..20_000).map(|_| a.explore_action(&[0.0; 3], true, &mut r).unwrap()).collect();
        for (j, (lo, hi)) in [(-1.0, 1.0), (-2.0, 2.0)].into_iter().enumerate() {
            let p = ks_uniform_p(draws.iter().map(|d| d[j]).collect(), lo, hi);
            assert!(p > 0.001, "dimension {j}: p = {p}");
        }
        // The statistic does reject a clearly non-uniform sample.
        assert!(ks_uniform_p((0..2000).map(|i| (i as f64 / 2000.0).powi(2)).collect(), 0.0, 1.0) < 1e-6);
    }
}
