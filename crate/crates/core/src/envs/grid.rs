//! 5x5 snake-maze gridworld.
//!
//! ```text
//! . . . . .
//! # # # # .
//! . . . . .
//! . # # # #
//! . . . . G
//! ```
//!
//! Actions 0..4 are up, right, down, left. With probability `SLIP` the
//! executed move is drawn uniformly from the three other directions. Moves
//! into walls or off the grid leave the agent in place. Entering `G` ends
//! the episode with true reward `GAMMA^t` (t = 0-based step index); every
//! other step pays 0, so an episode's return is its discounted goal return.
//! Observations are one-hot over all 25 cells in row-major order.

use rand::{Rng as _, SeedableRng};

use super::{check_finite_action, ActionSpace, Env, EnvSpec, StepResult};
use crate::error::Result;
use crate::rng::Rng;
use crate::tabular::TabularMdp;

pub const GRID_ROWS: usize = 5;
pub const GRID_COLS: usize = 5;
pub const GRID_GOAL: (usize, usize) = (4, 4);
pub const GRID_WALLS: [(usize, usize); 8] = [(1, 0), (1, 1), (1, 2), (1, 3), (3, 1), (3, 2), (3, 3), (3, 4)];
pub const SLIP: f64 = 0.1;
pub const GAMMA: f64 = 0.99;
pub const MAX_STEPS: usize = 30;
const MOVES: [(i64, i64); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

pub struct GridWorld {
    spec: EnvSpec,
    cell: (usize, usize),
    t: usize,
    rng: Rng,
}

impl Default for GridWorld {
    fn default() -> Self {
        Self::new()
    }
}

fn is_wall(cell: (usize, usize)) -> bool {
    GRID_WALLS.contains(&cell)
}

impl GridWorld {
    pub fn new() -> Self {
        let spec = EnvSpec {
            env_id: "grid5".into(),
            obs_dim: GRID_ROWS * GRID_COLS,
            act_dim: 1,
            action_low: vec![0.0],
            action_high: vec![3.0],
            max_episode_steps: MAX_STEPS,
            true_reward_available: true,
            action_space: ActionSpace::Discrete { n: 4 },
        };
        let start = Self::start_cells()[0];
        Self { spec, cell: start, t: 0, rng: Rng::seed_from_u64(0) }
    }

    /// Open cells in row-major order; these index the tabular export.
    pub fn free_cells() -> Vec<(usize, usize)> {
        (0..GRID_ROWS)
            .flat_map(|r| (0..GRID_COLS).map(move |c| (r, c)))
            .filter(|c| !is_wall(*c))
            .collect()
    }

    /// Support of the initial distribution: every open non-goal cell.
    pub fn start_cells() -> Vec<(usize, usize)> {
        Self::free_cells().into_iter().filter(|c| *c != GRID_GOAL).collect()
    }

    pub fn cell(&self) -> (usize, usize) {
        self.cell
    }

    /// Move the agent to an open cell without touching the step counter or rng.
    pub fn place(&mut self, cell: (usize, usize)) {
        assert!(!is_wall(cell), "cannot place agent on a wall");
        self.cell = cell;
    }

    /// Cell a move would reach without slipping.
    pub fn intended(cell: (usize, usize), action: usize) -> (usize, usize) {
        let (dr, dc) = MOVES[action];
        let r = cell.0 as i64 + dr;
        let c = cell.1 as i64 + dc;
        if r < 0 || c < 0 || r >= GRID_ROWS as i64 || c >= GRID_COLS as i64 {
            return cell;
        }
        let next = (r as usize, c as usize);
        if is_wall(next) {
            cell
        } else {
            next
        }
    }

    /// `p(executed move | chosen action)`.
    pub fn move_prob(chosen: usize, executed: usize) -> f64 {
        if chosen == executed {
            1.0 - SLIP
        } else {
            SLIP / 3.0
        }
    }

    pub fn one_hot(cell: (usize, usize)) -> Vec<f64> {
        let mut v = vec![0.0; GRID_ROWS * GRID_COLS];
        v[cell.0 * GRID_COLS + cell.1] = 1.0;
        v
    }

    /// Inverse of [`GridWorld::one_hot`].
    pub fn cell_of(obs: &[f64]) -> (usize, usize) {
        let i = obs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        (i / GRID_COLS, i % GRID_COLS)
    }

    /// Infinite-horizon export over the open cells: non-goal rows follow the
    /// slip dynamics, the goal row restarts from the uniform initial
    /// distribution over non-goal cells.
    pub fn tabular_mdp() -> TabularMdp {
        let cells = Self::free_cells();
        let n = cells.len();
        let index = |c: (usize, usize)| cells.iter().position(|x| *x == c).unwrap();
        let starts = Self::start_cells();
        let p_start = 1.0 / starts.len() as f64;
        let mut p0 = vec![0.0; n];
        for c in &starts {
            p0[index(*c)] = p_start;
        }
        let mut transition = vec![0.0; n * 4 * n];
        for (s, &cell) in cells.iter().enumerate() {
            for a in 0..4 {
                let row = &mut transition[(s * 4 + a) * n..(s * 4 + a + 1) * n];
                if cell == GRID_GOAL {
                    row.copy_from_slice(&p0);
                    continue;
                }
                for b in 0..4 {
                    row[index(Self::intended(cell, b))] += Self::move_prob(a, b);
                }
            }
        }
        TabularMdp::new(n, 4, transition, p0, GAMMA).expect("grid export is a valid MDP")
    }

    /// Value iteration for the goal-reaching objective (reward 1 on entering
    /// the goal, goal terminal) until the sup-norm Bellman residual is below
    /// `tol`. Returns `Q` indexed by open-cell index and action.
    pub fn value_iteration(tol: f64) -> Vec<[f64; 4]> {
        let cells = Self::free_cells();
        let index = |c: (usize, usize)| cells.iter().position(|x| *x == c).unwrap();
        let succ: Vec<[usize; 4]> = cells.iter().map(|&c| std::array::from_fn(|b| index(Self::intended(c, b)))).collect();
        let goal = index(GRID_GOAL);
        let mut v = vec![0.0; cells.len()];
        loop {
            let q: Vec<[f64; 4]> = (0..cells.len())
                .map(|s| {
                    std::array::from_fn(|a| {
                        if s == goal {
                            return 0.0;
                        }
                        (0..4)
                            .map(|b| {
                                let t = succ[s][b];
                                let value = if t == goal { 1.0 } else { GAMMA * v[t] };
                                Self::move_prob(a, b) * value
                            })
                            .sum()
                    })
                })
                .collect();
            let next: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::MIN, f64::max)).collect();
            let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if residual < tol {
                return q;
            }
        }
    }

    /// Greedy action per open cell (first maximizer on ties).
    pub fn greedy_actions(q: &[[f64; 4]]) -> Vec<usize> {
        q.iter()
            .map(|row| (0..4).fold(0, |best, a| if row[a] > row[best] { a } else { best }))
            .collect()
    }
}

impl Env for GridWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = Rng::seed_from_u64(seed);
        let starts = Self::start_cells();
        self.cell = starts[self.rng.random_range(0..starts.len())];
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_finite_action(action, 1)?;
        let mut a = action.to_vec();
        let clipped = self.spec.action_space.clip(&mut a);
        let chosen = a[0] as usize;
        let executed = if self.rng.random::<f64>() < SLIP {
            let k = self.rng.random_range(0..3);
            (0..4).filter(|&b| b != chosen).nth(k).unwrap()
        } else {
            chosen
        };
        self.cell = Self::intended(self.cell, executed);
        let terminal = self.cell == GRID_GOAL;
        let true_reward = if terminal { GAMMA.powi(self.t as i32) } else { 0.0 };
        self.t += 1;
        let truncated = !terminal && self.t >= MAX_STEPS;
        Ok(StepResult { next_state: self.observation(), true_reward, terminal, truncated, clipped })
    }

    fn observation(&self) -> Vec<f64> {
        Self::one_hot(self.cell)
    }

    fn constants(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("rows", GRID_ROWS as f64),
            ("cols", GRID_COLS as f64),
            ("slip_probability", SLIP),
            ("gamma", GAMMA),
            ("goal_row", GRID_GOAL.0 as f64),
            ("goal_col", GRID_GOAL.1 as f64),
            ("walls", GRID_WALLS.len() as f64),
            ("max_episode_steps", MAX_STEPS as f64),
        ]
    }
}
