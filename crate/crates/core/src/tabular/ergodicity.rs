use std::collections::VecDeque;

use serde::Serialize;

use super::occupancy::StateActionChain;

/// Irreducibility and aperiodicity of a chain, restricted to the pairs
/// reachable from the initial distribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErgodicityReport {
    pub reachable: Vec<usize>,
    pub irreducible: bool,
    /// `None` when the chain is reducible.
    pub period: Option<u64>,
}

impl ErgodicityReport {
    pub fn aperiodic(&self) -> bool {
        self.period == Some(1)
    }

    pub fn ergodic(&self) -> bool {
        self.irreducible && self.aperiodic()
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn bfs(start: &[usize], adj: &[Vec<usize>]) -> Vec<Option<u64>> {
    let mut level = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    for &s in start {
        if level[s].is_none() {
            level[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let next = level[u].unwrap() + 1;
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    level
}

pub fn ergodicity_report(chain: &StateActionChain) -> ErgodicityReport {
    let n = chain.n_pairs();
    let adj: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| chain.p[(i, j)] > 0.0).collect()).collect();
    let starts: Vec<usize> = (0..n).filter(|&i| chain.d0[i] > 0.0).collect();
    let reachable: Vec<usize> = bfs(&starts, &adj)
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|_| i))
        .collect();
    if reachable.is_empty() {
        return ErgodicityReport { reachable, irreducible: false, period: None };
    }

    // Strong connectivity of the reachable set: one root reaches everything
    // forward and backward.
    let root = reachable[0];
    let forward = bfs(&[root], &adj);
    let mut radj = vec![Vec::new(); n];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            radj[v].push(u);
        }
    }
    let backward = bfs(&[root], &radj);
    let irreducible = reachable.iter().all(|&i| forward[i].is_some() && backward[i].is_some());
    if !irreducible {
        return ErgodicityReport { reachable, irreducible, period: None };
    }

    // Period = gcd of level[u] + 1 - level[v] over all edges in the class.
    let mut period = 0;
    for &u in &reachable {
        for &v in &adj[u] {
            let lu = forward[u].unwrap() as i64;
            let lv = forward[v].unwrap() as i64;
            period = gcd(period, (lu + 1 - lv).unsigned_abs());
        }
    }
    ErgodicityReport { reachable, irreducible, period: Some(period) }
}

/// Irreducible and aperiodic on the reachable pairs.
pub fn check_ergodicity(chain: &StateActionChain) -> bool {
    ergodicity_report(chain).ergodic()
}
