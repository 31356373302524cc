//! State-conditioned discriminator deciding whether an action matches the
//! expert's action in a given state. Trained once before imitation starts,
//! then frozen: there is no `&mut self` method on a trained discriminator.

use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::demos::DemoSet;
use crate::envs::{make_env, ActionSpace};
use crate::error::{contract, ensure, Result};
use crate::nn::{checkpoint, Activation, AdamConfig, AdamState, Mlp, MlpSpec};
use crate::rng::{self, Rng};

/// Outputs are kept this far away from 0 and 1 so they stay strictly inside
/// the open interval in floating point.
pub const PROB_EPS: f64 = 1e-12;
pub const THRESHOLD_RANGE: (f64, f64) = (0.7, 0.95);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscConfig {
    pub hidden_layers: Vec<usize>,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub threshold: f64,
    pub n_per_state: usize,
    pub init_scale: f64,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![100, 100],
            iterations: 1000,
            batch_size: 256,
            learning_rate: 1e-3,
            threshold: 0.8,
            n_per_state: 1,
            init_scale: 1e-2,
        }
    }
}

impl DiscConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = THRESHOLD_RANGE;
        ensure((lo..=hi).contains(&self.threshold), || {
            format!("threshold {} outside [{lo}, {hi}]", self.threshold)
        })?;
        ensure(self.batch_size >= 2, || "discriminator batch_size must be at least 2".into())?;
        ensure(self.n_per_state >= 1, || "n_per_state must be at least 1".into())?;
        ensure(self.learning_rate > 0.0 && self.init_scale > 0.0, || "rates must be positive".into())
    }
}

/// A labelled `(state, action)` pair set: expert pairs and random-action pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSamples {
    pub positives: Vec<(Vec<f64>, Vec<f64>)>,
    pub negatives: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Pairs every expert state with `n_per_state` random actions.
///
/// Continuous actions are uniform over the box. Discrete actions are uniform
/// over the actions other than the demonstrated one.
pub fn make_negatives(demos: &DemoSet, action_space: &ActionSpace, n_per_state: usize, seed: u64) -> Result<PairSamples> {
    ensure(n_per_state >= 1, || "n_per_state must be at least 1".into())?;
    let mut rng = rng::substream(seed, "negatives");
    let mut positives = Vec::with_capacity(demos.n_pairs());
    let mut negatives = Vec::with_capacity(demos.n_pairs() * n_per_state);
    for (s, a) in demos.pairs() {
        positives.push((s.to_vec(), a.to_vec()));
        for _ in 0..n_per_state {
            let neg = match action_space {
                ActionSpace::Discrete { n } => {
                    ensure(*n >= 2, || "need at least two discrete actions".into())?;
                    let k = rng.random_range(0..n - 1);
                    let k = if k >= a[0] as usize { k + 1 } else { k };
                    vec![k as f64]
                }
                ActionSpace::Continuous { .. } => action_space.sample_uniform(&mut rng),
            };
            negatives.push((s.to_vec(), neg));
        }
    }
    Ok(PairSamples { positives, negatives })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    net: Mlp,
    action_space: ActionSpace,
    obs_dim: usize,
    threshold: f64,
    trained: bool,
}

impl Discriminator {
    pub fn new(obs_dim: usize, action_space: ActionSpace, config: &DiscConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spec = MlpSpec::new(
            obs_dim + action_space.encoded_dim(),
            &config.hidden_layers,
            1,
            Activation::Tanh,
            Activation::Sigmoid,
        )?;
        let net = Mlp::new(spec, config.init_scale, &mut rng::substream(seed, "discriminator/init"))?;
        Ok(Self { net, action_space, obs_dim, threshold: config.threshold, trained: false })
    }

    pub fn for_env(env_id: &str, config: &DiscConfig, seed: u64) -> Result<Self> {
        let env = make_env(env_id)?;
        let spec = env.spec();
        Self::new(spec.obs_dim, spec.action_space.clone(), config, seed)
    }

    /// Wrap an already trained network, e.g. one read from a checkpoint.
    pub fn from_trained(net: Mlp, obs_dim: usize, action_space: ActionSpace, threshold: f64) -> Result<Self> {
        ensure(net.spec.input_dim == obs_dim + action_space.encoded_dim() && net.spec.output_dim == 1, || {
            "network shape does not match the environment".into()
        })?;
        ensure(net.spec.output_activation == Activation::Sigmoid, || "discriminator needs a sigmoid output".into())?;
        let (lo, hi) = THRESHOLD_RANGE;
        ensure((lo..=hi).contains(&threshold), || format!("threshold {threshold} outside [{lo}, {hi}]"))?;
        Ok(Self { net, action_space, obs_dim, threshold, trained: true })
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    fn encode_into(&self, state: &[f64], action: &[f64], out: &mut Vec<f64>) -> Result<()> {
        ensure(state.len() == self.obs_dim, || {
            format!("state of length {}, expected {}", state.len(), self.obs_dim)
        })?;
        out.extend_from_slice(state);
        self.action_space.encode(action, out);
        Ok(())
    }

    fn encode_pairs<'a>(&self, pairs: impl Iterator<Item = (&'a [f64], &'a [f64])>, rows: usize) -> Result<Array2<f64>> {
        let width = self.net.spec.input_dim;
        let mut flat = Vec::with_capacity(rows * width);
        for (s, a) in pairs {
            self.encode_into(s, a, &mut flat)?;
        }
        Array2::from_shape_vec((flat.len() / width, width), flat).map_err(|e| contract(e.to_string()))
    }

    /// Network output without the trained check; used during pretraining
    /// and for the untrained-output tests.
    pub fn raw_probability(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let mut x = Vec::with_capacity(self.net.spec.input_dim);
        self.encode_into(state, action, &mut x)?;
        Ok(self.net.forward(&x)?[0].clamp(PROB_EPS, 1.0 - PROB_EPS))
    }

    pub fn classify(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        if !self.trained {
            return Err(contract("discriminator has not been pretrained"));
        }
        self.raw_probability(state, action)
    }

    pub fn is_positive(&self, state: &[f64], action: &[f64]) -> Result<bool> {
        Ok(self.classify(state, action)? >= self.threshold)
    }

    /// Fraction of `samples` classified correctly at the threshold.
    pub fn accuracy(&self, samples: &PairSamples) -> Result<f64> {
        let mut correct = 0usize;
        for (s, a) in &samples.positives {
            correct += self.is_positive(s, a)? as usize;
        }
        for (s, a) in &samples.negatives {
            correct += !self.is_positive(s, a)? as usize;
        }
        Ok(correct as f64 / (samples.positives.len() + samples.negatives.len()) as f64)
    }

    /// Minimise binary cross-entropy with Adam on balanced batches: half
    /// positives, half negatives, each drawn uniformly with replacement.
    pub fn pretrain(mut self, samples: &PairSamples, config: &DiscConfig, seed: u64) -> Result<(Self, PretrainReport)> {
        config.validate()?;
        ensure(!samples.positives.is_empty() && !samples.negatives.is_empty(), || {
            "pretraining needs positive and negative samples".into()
        })?;
        let mut warnings = Vec::new();
        let key = |(s, a): &(Vec<f64>, Vec<f64>)| s.iter().chain(a).map(|v| v.to_bits()).collect::<Vec<u64>>();
        let positive_keys: HashSet<Vec<u64>> = samples.positives.iter().map(key).collect();
        let overlap = samples.negatives.iter().filter(|p| positive_keys.contains(&key(p))).count();
        if overlap > 0 {
            let msg = format!("{overlap} negative pairs are identical to positive pairs");
            log::warn!("{msg}");
            warnings.push(msg);
        }

        let mut rng: Rng = rng::substream(seed, "discriminator/pretrain");
        let mut adam = AdamState::new(&self.net.spec, AdamConfig::with_lr(config.learning_rate));
        let half = config.batch_size / 2;
        let mut final_loss = f64::NAN;
        for _ in 0..config.iterations {
            let mut batch = Vec::with_capacity(config.batch_size);
            for i in 0..config.batch_size {
                let set = if i < half { &samples.positives } else { &samples.negatives };
                batch.push(&set[rng.random_range(0..set.len())]);
            }
            let x = self.encode_pairs(batch.iter().map(|(s, a)| (s.as_slice(), a.as_slice())), config.batch_size)?;
            let cache = self.net.forward_cached(x.view())?;
            let p = cache.output();
            let n = config.batch_size as f64;
            let mut g = Array2::zeros((config.batch_size, 1));
            let mut loss = 0.0;
            for i in 0..config.batch_size {
                let y = if i < half { 1.0 } else { 0.0 };
                let pi = p[[i, 0]].clamp(PROB_EPS, 1.0 - PROB_EPS);
                loss -= y * pi.ln() + (1.0 - y) * (1.0 - pi).ln();
                g[[i, 0]] = (p[[i, 0]] - y) / n;
            }
            final_loss = loss / n;
            let (grads, _) = self.net.backward_from_logits(&cache, g.view())?;
            adam.step(&mut self.net.params, &grads)?;
        }
        self.trained = true;
        let train_accuracy = self.accuracy(samples)?;
        Ok((self, PretrainReport { final_loss, train_accuracy, warnings }))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(&self.net, path)
    }

    /// Reload a saved network as a frozen, trained discriminator for `env_id`.
    pub fn load(path: impl AsRef<Path>, env_id: &str, threshold: f64) -> Result<Self> {
        let net = checkpoint::load(path)?;
        let env = make_env(env_id)?;
        let spec = env.spec();
        Self::from_trained(net, spec.obs_dim, spec.action_space.clone(), threshold)
    }
}
