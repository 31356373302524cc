use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mdp::{TabularMdp, TabularPolicy, PROB_TOL};
use crate::error::{ensure, Error, Result};

/// Entries at or below this are treated as zero when reading off supports.
pub const SUPPORT_TOL: f64 = 1e-9;
/// Sup-norm residual bound a solve must meet.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyKind {
    /// Solution of the predecessor-bootstrapped stationarity equation; a distribution.
    Backward,
    /// Solution of the successor-bootstrapped equation; not normalized in general.
    Forward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyVector {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
    pub kind: OccupancyKind,
}

impl OccupancyVector {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>, kind: OccupancyKind) -> Result<Self> {
        ensure(values.len() == n_states * n_actions, || {
            format!("occupancy has {} entries, expected {}", values.len(), n_states * n_actions)
        })?;
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < -1e-10) {
            return Err(Error::Numerical(format!("occupancy entry {i} is {}", values[i])));
        }
        if kind == OccupancyKind::Backward {
            let sum: f64 = values.iter().sum();
            if (sum - 1.0).abs() > 1e-8 {
                return Err(Error::Numerical(format!("backward occupancy sums to {sum}")));
            }
        }
        Ok(Self { n_states, n_actions, values, kind })
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn state_mass(&self, s: usize) -> f64 {
        self.values[s * self.n_actions..(s + 1) * self.n_actions].iter().sum()
    }

    /// Indices `(s, a)` with value above [`SUPPORT_TOL`].
    pub fn support(&self) -> Vec<(usize, usize)> {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .filter(|&(s, a)| self.get(s, a) > SUPPORT_TOL)
            .collect()
    }

    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// The Markov chain a policy induces on state-action pairs.
#[derive(Debug, Clone)]
pub struct StateActionChain {
    n_states: usize,
    n_actions: usize,
    /// `P[(s,a), (s',a')] = pi(a'|s') p(s'|s,a)`.
    pub p: DMatrix<f64>,
    /// `d0[(s,a)] = p0(s) pi(a|s)`.
    pub d0: DVector<f64>,
    /// `pi(a|s) > 0` per pair.
    pub policy_support: Vec<bool>,
}

impl StateActionChain {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    fn support_indices(&self) -> Vec<usize> {
        (0..self.n_pairs()).filter(|&i| self.policy_support[i]).collect()
    }
}

pub fn build_chain(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<StateActionChain> {
    ensure(mdp.n_states() == policy.n_states() && mdp.n_actions() == policy.n_actions(), || {
        format!(
            "MDP is {}x{} but policy is {}x{}",
            mdp.n_states(),
            mdp.n_actions(),
            policy.n_states(),
            policy.n_actions()
        )
    })?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let n = ns * na;
    let p = DMatrix::from_fn(n, n, |i, j| {
        let (s, a) = (i / na, i % na);
        let (s2, a2) = (j / na, j % na);
        policy.prob(s2, a2) * mdp.prob(s, a, s2)
    });
    let d0 = DVector::from_fn(n, |i, _| mdp.p0()[i / na] * policy.prob(i / na, i % na));
    for i in 0..n {
        let sum: f64 = p.row(i).sum();
        if (sum - 1.0).abs() > PROB_TOL * n as f64 {
            return Err(Error::Numerical(format!("chain row {i} sums to {sum}")));
        }
    }
    let policy_support = (0..n).map(|i| policy.prob(i / na, i % na) > 0.0).collect();
    Ok(StateActionChain { n_states: ns, n_actions: na, p, d0, policy_support })
}

/// Dense LU solve of `(I - gamma M) x = rhs`, checked by its own residual.
fn solve_resolvent(m: &DMatrix<f64>, gamma: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    let a = DMatrix::identity(n, n) - m * gamma;
    let lu = a.clone().lu();
    let x = lu.solve(rhs).ok_or_else(|| {
        let u = lu.u();
        let diag = u.diagonal().map(f64::abs);
        Error::Numerical(format!(
            "singular system: |U| diagonal ranges over [{:e}, {:e}]",
            diag.min(),
            diag.max()
        ))
    })?;
    let residual = (&a * &x - rhs).amax();
    if !residual.is_finite() || residual > RESIDUAL_TOL {
        let u = lu.u();
        let diag = u.diagonal().map(f64::abs);
        return Err(Error::Numerical(format!(
            "solve residual {residual:e} exceeds {RESIDUAL_TOL:e} (pivot ratio {:e})",
            diag.min() / diag.max()
        )));
    }
    Ok(x)
}

/// Occupancy from the predecessor form `d = gamma P^T d + (1-gamma) d0`.
pub fn solve_backward_occupancy(chain: &StateActionChain, gamma: f64) -> Result<OccupancyVector> {
    let rhs = &chain.d0 * (1.0 - gamma);
    let x = solve_resolvent(&chain.p.transpose(), gamma, &rhs)?;
    OccupancyVector::new(chain.n_states, chain.n_actions, x.as_slice().to_vec(), OccupancyKind::Backward)
}

/// Proxy occupancy from the successor form `d~ = gamma P d~ + (1-gamma) d0`,
/// imposed on the pairs the policy can choose and zero elsewhere.
///
/// Columns of `P` for pairs with `pi(a|s) = 0` vanish, so the on-support
/// block is closed and its solution coincides with the on-support entries of
/// [`solve_forward_unrestricted`]. The two differ only on never-chosen pairs.
pub fn solve_forward_occupancy(chain: &StateActionChain, gamma: f64) -> Result<OccupancyVector> {
    solve_forward_with_reward(chain, gamma, (&chain.d0 * (1.0 - gamma)).as_slice())
}

/// On-support successor-form fixed point for a per-pair reward: `x = r + gamma P x`.
pub fn solve_forward_with_reward(chain: &StateActionChain, gamma: f64, reward: &[f64]) -> Result<OccupancyVector> {
    ensure(reward.len() == chain.n_pairs(), || format!("reward has {} entries", reward.len()))?;
    let idx = chain.support_indices();
    let block = chain.p.select_rows(&idx).select_columns(&idx);
    let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| reward[i]));
    let x = solve_resolvent(&block, gamma, &rhs)?;
    let mut values = vec![0.0; chain.n_pairs()];
    for (k, &i) in idx.iter().enumerate() {
        values[i] = x[k];
    }
    OccupancyVector::new(chain.n_states, chain.n_actions, values, OccupancyKind::Forward)
}

/// The full-matrix resolvent `(1-gamma)(I - gamma P)^-1 d0`, including rows of
/// never-chosen pairs, which pick up `gamma E[d~(s', pi(s'))]`.
pub fn solve_forward_unrestricted(chain: &StateActionChain, gamma: f64) -> Result<OccupancyVector> {
    let x = solve_resolvent(&chain.p, gamma, &(&chain.d0 * (1.0 - gamma)))?;
    OccupancyVector::new(chain.n_states, chain.n_actions, x.as_slice().to_vec(), OccupancyKind::Forward)
}

/// Sup-norm residual of `d - gamma P^T d - (1-gamma) d0`.
pub fn backward_residual(chain: &StateActionChain, gamma: f64, d: &[f64]) -> f64 {
    let d = DVector::from_column_slice(d);
    (&d - chain.p.tr_mul(&d) * gamma - &chain.d0 * (1.0 - gamma)).amax()
}

/// Sup-norm residual of `d~ - gamma P d~ - (1-gamma) d0` over the policy's pairs.
pub fn forward_residual(chain: &StateActionChain, gamma: f64, d: &[f64]) -> f64 {
    let d = DVector::from_column_slice(d);
    let r = &d - &chain.p * &d * gamma - &chain.d0 * (1.0 - gamma);
    chain.support_indices().iter().map(|&i| r[i].abs()).fold(0.0, f64::max)
}

/// Sup-norm residual of the successor equation over every pair.
pub fn forward_residual_unrestricted(chain: &StateActionChain, gamma: f64, d: &[f64]) -> f64 {
    let d = DVector::from_column_slice(d);
    (&d - &chain.p * &d * gamma - &chain.d0 * (1.0 - gamma)).amax()
}

/// Recover `pi(a|s) = d(s,a) / sum_a d(s,a)`.
pub fn policy_from_occupancy(d: &OccupancyVector) -> Result<TabularPolicy> {
    let na = d.n_actions;
    let mut probs = Vec::with_capacity(d.values.len());
    for s in 0..d.n_states {
        let mass = d.state_mass(s);
        if !(mass > 1e-12) {
            return Err(Error::UnreachableState { state: s });
        }
        let row = &d.values[s * na..(s + 1) * na];
        let normalized: Vec<f64> = row.iter().map(|v| v.max(0.0) / mass).collect();
        let total: f64 = normalized.iter().sum();
        probs.extend(normalized.iter().map(|p| p / total));
    }
    TabularPolicy::new(d.n_states, na, probs)
}

/// True iff `d` puts mass exactly on the pairs the deterministic `policy` chooses.
pub fn bfs_support_check(d: &OccupancyVector, policy: &TabularPolicy) -> Result<bool> {
    ensure(d.n_states == policy.n_states() && d.n_actions == policy.n_actions(), || {
        "occupancy and policy dimensions differ".into()
    })?;
    let actions = policy
        .actions()
        .ok_or_else(|| Error::Contract("support check needs a deterministic policy".into()))?;
    Ok(actions.iter().enumerate().all(|(s, &mu)| {
        (0..d.n_actions).all(|a| {
            let v = d.get(s, a);
            if a == mu {
                v > SUPPORT_TOL
            } else {
                v <= SUPPORT_TOL
            }
        })
    }))
}
