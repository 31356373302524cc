//! Expert demonstration sets and the `.d2demo` file format.
//!
//! A demonstration holds states and actions only; there is no reward field.
//!
//! File layout (integers little-endian):
//!
//! | bytes   | content                                                     |
//! |---------|-------------------------------------------------------------|
//! | 8       | magic `D2DEMO01`                                            |
//! | 8       | `u64` length `H` of the JSON header                         |
//! | H       | UTF-8 JSON [`DemoHeader`]                                   |
//! | rest    | `f64` rows: every `(state, action)` row of every trajectory |
//! |         | in order, then one `state` row per terminated trajectory    |

use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::envs::{episode_seed, make_env, ExpertController};
use crate::error::{contract, ensure, Error, Result};
use crate::rng::{self, Rng};

pub const MAGIC: &[u8; 8] = b"D2DEMO01";
pub const EXTENSION: &str = "d2demo";

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// Observation reached by the last action when the episode terminated
    /// (as opposed to being truncated).
    pub terminal_state: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub env_id: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub trajectories: Vec<Trajectory>,
    pub generator_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoHeader {
    pub env_id: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Floats per `(state, action)` row; must equal `obs_dim + act_dim`.
    pub row_width: usize,
    pub generator_tag: String,
    pub n_trajectories: usize,
    pub n_rows: usize,
    /// Start row of each trajectory, followed by `n_rows`.
    pub trajectory_offsets: Vec<usize>,
    pub terminated: Vec<bool>,
}

impl DemoSet {
    pub fn validate(&self) -> Result<()> {
        ensure(!self.trajectories.is_empty(), || "demonstration set has no trajectories".into())?;
        let space = make_env(&self.env_id).ok().map(|e| e.spec().action_space.clone());
        for (i, t) in self.trajectories.iter().enumerate() {
            ensure(!t.is_empty() && t.states.len() == t.actions.len(), || {
                format!("trajectory {i} has {} states and {} actions", t.states.len(), t.actions.len())
            })?;
            let terminal = t.terminal_state.iter();
            for s in t.states.iter().chain(terminal) {
                if s.len() != self.obs_dim {
                    return Err(Error::Schema(format!("trajectory {i}: state of length {}, expected {}", s.len(), self.obs_dim)));
                }
                ensure(s.iter().all(|v| v.is_finite()), || format!("trajectory {i}: non-finite state"))?;
            }
            for a in &t.actions {
                if a.len() != self.act_dim {
                    return Err(Error::Schema(format!("trajectory {i}: action of length {}, expected {}", a.len(), self.act_dim)));
                }
                if let Some(space) = &space {
                    ensure(space.contains(a), || format!("trajectory {i}: action {a:?} outside bounds"))?;
                }
            }
        }
        Ok(())
    }

    pub fn n_pairs(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Every `(state, action)` pair, trajectory by trajectory.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.trajectories
            .iter()
            .flat_map(|t| t.states.iter().zip(&t.actions).map(|(s, a)| (s.as_slice(), a.as_slice())))
    }

    pub fn header(&self) -> DemoHeader {
        let mut offsets = Vec::with_capacity(self.trajectories.len() + 1);
        let mut acc = 0;
        for t in &self.trajectories {
            offsets.push(acc);
            acc += t.len();
        }
        offsets.push(acc);
        DemoHeader {
            env_id: self.env_id.clone(),
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            row_width: self.obs_dim + self.act_dim,
            generator_tag: self.generator_tag.clone(),
            n_trajectories: self.trajectories.len(),
            n_rows: acc,
            trajectory_offsets: offsets,
            terminated: self.trajectories.iter().map(|t| t.terminal_state.is_some()).collect(),
        }
    }
}

/// Roll out `controller` for `n_trajectories` episodes. Trajectory `i`
/// depends only on `(seed, i)`, so smaller sets are prefixes of larger ones.
pub fn generate_demos(env_id: &str, controller: &ExpertController, n_trajectories: usize, seed: u64) -> Result<DemoSet> {
    ensure(n_trajectories >= 1, || "need at least one trajectory".into())?;
    ensure(controller.env_id == env_id, || {
        format!("controller is for {:?}, environment is {env_id:?}", controller.env_id)
    })?;
    let mut env = make_env(env_id)?;
    let spec = env.spec().clone();
    let mut trajectories = Vec::with_capacity(n_trajectories);
    for i in 0..n_trajectories {
        let mut noise: Rng = rng::substream(seed, &format!("expert/{i}"));
        let mut obs = env.reset(episode_seed(seed, i));
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let terminal_state = loop {
            let a = controller.act(&obs, &mut noise);
            let r = env.step(&a)?;
            states.push(std::mem::replace(&mut obs, r.next_state));
            actions.push(a);
            if r.terminal {
                break Some(obs);
            }
            if r.truncated {
                break None;
            }
        };
        trajectories.push(Trajectory { states, actions, terminal_state });
    }
    let demos = DemoSet {
        env_id: env_id.to_string(),
        obs_dim: spec.obs_dim,
        act_dim: spec.act_dim,
        trajectories,
        generator_tag: controller.tag(),
    };
    demos.validate()?;
    Ok(demos)
}

pub fn encode(demos: &DemoSet) -> Result<Vec<u8>> {
    demos.validate()?;
    let header = serde_json::to_vec(&demos.header())?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let mut push = |v: &[f64]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    for (s, a) in demos.pairs() {
        push(s);
        push(a);
    }
    for t in &demos.trajectories {
        if let Some(s) = &t.terminal_state {
            push(s);
        }
    }
    Ok(out)
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset, message: message.into() }
}

pub fn decode(bytes: &[u8]) -> Result<DemoSet> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(parse_err(0, "missing d2demo magic"));
    }
    if bytes.len() < 16 {
        return Err(parse_err(8, "file ends inside the header length"));
    }
    let h = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize
        .checked_add(h)
        .filter(|end| *end <= bytes.len())
        .ok_or_else(|| parse_err(16, format!("header of {h} bytes runs past end of file ({} bytes)", bytes.len())))?;
    let header: DemoHeader = serde_json::from_slice(&bytes[16..body]).map_err(|e| parse_err(16 + e.column(), e.to_string()))?;

    if header.row_width != header.obs_dim + header.act_dim {
        return Err(Error::Schema(format!(
            "rows hold {} values but obs_dim {} + act_dim {} = {}",
            header.row_width,
            header.obs_dim,
            header.act_dim,
            header.obs_dim + header.act_dim
        )));
    }
    let offsets = &header.trajectory_offsets;
    if header.n_trajectories == 0
        || offsets.len() != header.n_trajectories + 1
        || header.terminated.len() != header.n_trajectories
        || offsets[0] != 0
        || *offsets.last().unwrap() != header.n_rows
        || offsets.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::Schema("trajectory offsets inconsistent with counts".into()));
    }
    let n_terminal = header.terminated.iter().filter(|t| **t).count();
    let n_floats = header.n_rows * header.row_width + n_terminal * header.obs_dim;
    let have = bytes.len() - body;
    if have != 8 * n_floats {
        return Err(parse_err(
            body + have.min(8 * n_floats),
            format!("expected {} bytes of rows, found {have}", 8 * n_floats),
        ));
    }
    let floats: Vec<f64> = bytes[body..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let (rows, terminals) = floats.split_at(header.n_rows * header.row_width);
    let mut terminals = terminals.chunks_exact(header.obs_dim);
    let mut trajectories = Vec::with_capacity(header.n_trajectories);
    for (i, w) in offsets.windows(2).enumerate() {
        let mut states = Vec::with_capacity(w[1] - w[0]);
        let mut actions = Vec::with_capacity(w[1] - w[0]);
        for row in rows[w[0] * header.row_width..w[1] * header.row_width].chunks_exact(header.row_width) {
            states.push(row[..header.obs_dim].to_vec());
            actions.push(row[header.obs_dim..].to_vec());
        }
        let terminal_state = header.terminated[i].then(|| terminals.next().unwrap().to_vec());
        trajectories.push(Trajectory { states, actions, terminal_state });
    }
    let demos = DemoSet {
        env_id: header.env_id,
        obs_dim: header.obs_dim,
        act_dim: header.act_dim,
        trajectories,
        generator_tag: header.generator_tag,
    };
    demos.validate()?;
    Ok(demos)
}

pub fn save_demos(demos: &DemoSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(demos)?)?;
    Ok(())
}

pub fn load_demos(path: impl AsRef<Path>) -> Result<DemoSet> {
    decode(&std::fs::read(path)?)
}

/// `k` whole trajectories drawn without replacement, original order kept.
pub fn subsample(demos: &DemoSet, k: usize, seed: u64) -> Result<DemoSet> {
    let n = demos.trajectories.len();
    if k == 0 || k > n {
        return Err(contract(format!("cannot subsample {k} of {n} trajectories")));
    }
    let mut picked = index::sample(&mut rng::substream(seed, "subsample"), n, k).into_vec();
    picked.sort_unstable();
    Ok(DemoSet {
        trajectories: picked.into_iter().map(|i| demos.trajectories[i].clone()).collect(),
        ..demos.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{GridWorld, Stochasticity, GRID_GOAL};

    fn small() -> DemoSet {
        generate_demos("pointmass", &ExpertController::deterministic("pointmass").unwrap(), 2, 3).unwrap()
    }

    #[test]
    fn grid_expert_demos_reach_goal() {
        let demos = generate_demos("grid5", &ExpertController::deterministic("grid5").unwrap(), 20, 0).unwrap();
        assert_eq!(demos.trajectories.len(), 20);
        for t in &demos.trajectories {
            let last = t.terminal_state.as_ref().expect("episode must terminate at the goal");
            assert_eq!(GridWorld::cell_of(last), GRID_GOAL);
        }
    }

    #[test]
    fn smaller_sets_are_prefixes() {
        let exp = ExpertController::for_env("pointmass", Stochasticity::Gaussian { sigma: 0.3 }).unwrap();
        let five = generate_demos("pointmass", &exp, 5, 11).unwrap();
        let twenty = generate_demos("pointmass", &exp, 20, 11).unwrap();
        assert_eq!(five.trajectories[..], twenty.trajectories[..5]);
        assert_eq!(five.generator_tag, "stochastic:0.3");
    }

    #[test]
    fn mismatched_controller_is_rejected() {
        let exp = ExpertController::deterministic("pendulum").unwrap();
        assert!(matches!(generate_demos("pointmass", &exp, 1, 0), Err(Error::Contract(_))));
        assert!(generate_demos("pendulum", &exp, 0, 0).is_err());
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let demos = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.d2demo");
        save_demos(&demos, &path).unwrap();
        assert_eq!(load_demos(&path).unwrap(), demos);

        let grid = generate_demos("grid5", &ExpertController::deterministic("grid5").unwrap(), 3, 1).unwrap();
        assert_eq!(decode(&encode(&grid).unwrap()).unwrap(), grid);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let bytes = encode(&small()).unwrap();
        for cut in [4, 12, 40, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Parse { .. })), "cut at {cut}");
        }
    }

    #[test]
    fn row_width_disagreeing_with_header_is_a_schema_error() {
        let demos = small();
        let mut header = demos.header();
        header.row_width = 3 + demos.act_dim;
        header.obs_dim = 4;
        let h = serde_json::to_vec(&header).unwrap();
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&(h.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&h);
        bytes.extend(std::iter::repeat_n(0u8, 8 * header.n_rows * header.row_width));
        assert!(matches!(decode(&bytes), Err(Error::Schema(_))));

        let mut bad = demos.clone();
        bad.trajectories[0].states[0].pop();
        assert!(matches!(bad.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn subsample_contracts() {
        let exp = ExpertController::deterministic("pointmass").unwrap();
        let demos = generate_demos("pointmass", &exp, 20, 0).unwrap();
        assert_eq!(subsample(&demos, 20, 4).unwrap(), demos);
        let a = subsample(&demos, 5, 9).unwrap();
        assert_eq!(a, subsample(&demos, 5, 9).unwrap());
        assert_eq!(a.trajectories.len(), 5);
        // Order preserved: picks appear in their original relative order.
        let pos: Vec<usize> = a
            .trajectories
            .iter()
            .map(|t| demos.trajectories.iter().position(|u| u == t).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let distinct: std::collections::HashSet<Vec<usize>> = (0..10)
            .map(|seed| {
                subsample(&demos, 5, seed)
                    .unwrap()
                    .trajectories
                    .iter()
                    .map(|t| demos.trajectories.iter().position(|u| u == t).unwrap())
                    .collect()
            })
            .collect();
        assert!(distinct.len() >= 2);
        assert!(subsample(&demos, 0, 0).is_err());
        assert!(subsample(&demos, 21, 0).is_err());
    }
}
