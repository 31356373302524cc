use serde::{Deserialize, Serialize};

use crate::error::{contract, ensure, Error, Result};

pub(crate) const PROB_TOL: f64 = 1e-12;

/// A finite, discounted, infinite-horizon MDP.
///
/// `transition` is stored flat in `(s, a, s')` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    p0: Vec<f64>,
    gamma: f64,
}

/// On-disk JSON layout of a [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    p0: Vec<f64>,
    transition: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        ensure(doc.transition.len() == doc.n_states, || {
            format!("transition has {} state rows, expected {}", doc.transition.len(), doc.n_states)
        })?;
        let mut flat = Vec::with_capacity(doc.n_states * doc.n_actions * doc.n_states);
        for (s, rows) in doc.transition.iter().enumerate() {
            ensure(rows.len() == doc.n_actions, || {
                format!("transition[{s}] has {} action rows, expected {}", rows.len(), doc.n_actions)
            })?;
            for (a, row) in rows.iter().enumerate() {
                ensure(row.len() == doc.n_states, || {
                    format!("transition[{s}][{a}] has length {}, expected {}", row.len(), doc.n_states)
                })?;
                flat.extend_from_slice(row);
            }
        }
        TabularMdp::new(doc.n_states, doc.n_actions, flat, doc.p0, doc.gamma)
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(m: TabularMdp) -> Self {
        let transition = (0..m.n_states)
            .map(|s| (0..m.n_actions).map(|a| m.next_dist(s, a).to_vec()).collect())
            .collect();
        MdpDocument {
            n_states: m.n_states,
            n_actions: m.n_actions,
            gamma: m.gamma,
            p0: m.p0,
            transition,
        }
    }
}

fn check_distribution(v: &[f64], what: impl Fn() -> String) -> Result<()> {
    if v.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(contract(format!("{} has a negative or non-finite entry", what())));
    }
    let sum: f64 = v.iter().sum();
    ensure((sum - 1.0).abs() <= PROB_TOL, || format!("{} sums to {sum}, not 1", what()))
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        p0: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        ensure(n_states > 0 && n_actions > 0, || "MDP needs at least one state and action".into())?;
        ensure(transition.len() == n_states * n_actions * n_states, || {
            format!("transition tensor has {} entries, expected {}", transition.len(), n_states * n_actions * n_states)
        })?;
        ensure(p0.len() == n_states, || format!("p0 has length {}, expected {n_states}", p0.len()))?;
        ensure((0.0..1.0).contains(&gamma), || format!("gamma {gamma} outside [0, 1)"))?;
        for s in 0..n_states {
            for a in 0..n_actions {
                let i = (s * n_actions + a) * n_states;
                check_distribution(&transition[i..i + n_states], || format!("transition row ({s}, {a})"))?;
            }
        }
        check_distribution(&p0, || "p0".into())?;
        Ok(Self { n_states, n_actions, transition, p0, gamma })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    /// `p(s' | s, a)`.
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let i = (s * self.n_actions + a) * self.n_states;
        &self.transition[i..i + self.n_states]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn p0_strictly_positive(&self) -> bool {
        self.p0.iter().all(|p| *p > 0.0)
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, self.transition.clone(), self.p0.clone(), gamma)
    }

    pub fn with_p0(&self, p0: Vec<f64>) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, self.transition.clone(), p0, self.gamma)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Row-stochastic `(s, a)` policy matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        ensure(n_states > 0 && n_actions > 0, || "policy needs at least one state and action".into())?;
        ensure(probs.len() == n_states * n_actions, || {
            format!("policy has {} entries, expected {}", probs.len(), n_states * n_actions)
        })?;
        for s in 0..n_states {
            check_distribution(&probs[s * n_actions..(s + 1) * n_actions], || format!("policy row {s}"))?;
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            ensure(a < n_actions, || format!("action {a} at state {s} out of range"))?;
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self { n_states, n_actions, probs: vec![p; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states).all(|s| {
            let row = self.row(s);
            row.iter().filter(|p| **p == 1.0).count() == 1 && row.iter().all(|p| *p == 0.0 || *p == 1.0)
        })
    }

    /// The chosen action per state, if the policy is deterministic.
    pub fn actions(&self) -> Option<Vec<usize>> {
        if !self.is_deterministic() {
            return None;
        }
        Some((0..self.n_states).map(|s| self.row(s).iter().position(|p| *p == 1.0).unwrap()).collect())
    }
}
