use rand::Rng as _;
use rand_distr::{Distribution, Exp1};

use super::mdp::{TabularMdp, TabularPolicy};
use crate::error::Result;
use crate::rng::Rng;

/// Flat Dirichlet draw via normalized unit exponentials.
pub fn flat_dirichlet(n: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            let mut v: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            // Push rounding into the largest entry so the row sums to 1 within 1e-12.
            let err = 1.0 - v.iter().sum::<f64>();
            let imax = (0..n).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
            v[imax] += err;
            return v;
        }
    }
}

/// Random MDP with flat-Dirichlet transition rows and a strictly positive p0.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, rng: &mut Rng) -> Result<TabularMdp> {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(flat_dirichlet(n_states, rng));
    }
    let p0 = loop {
        let p = flat_dirichlet(n_states, rng);
        if p.iter().all(|x| *x > 0.0) {
            break p;
        }
    };
    TabularMdp::new(n_states, n_actions, transition, p0, gamma)
}

pub fn random_deterministic_policy(n_states: usize, n_actions: usize, rng: &mut Rng) -> TabularPolicy {
    let actions: Vec<usize> = (0..n_states).map(|_| rng.random_range(0..n_actions)).collect();
    TabularPolicy::deterministic(n_actions, &actions).expect("actions drawn in range")
}

pub fn random_stochastic_policy(n_states: usize, n_actions: usize, rng: &mut Rng) -> TabularPolicy {
    let probs = (0..n_states).flat_map(|_| flat_dirichlet(n_actions, rng)).collect();
    TabularPolicy::new(n_states, n_actions, probs).expect("dirichlet rows are distributions")
}
