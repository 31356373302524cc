//! Exact finite-MDP occupancy machinery and the tabular TD learner.

mod ergodicity;
mod mdp;
mod occupancy;
pub mod random;
mod td;
pub mod verify;

pub use ergodicity::{check_ergodicity, ergodicity_report, ErgodicityReport};
pub use mdp::{TabularMdp, TabularPolicy};
pub use occupancy::{
    backward_residual, bfs_support_check, build_chain, forward_residual, forward_residual_unrestricted,
    policy_from_occupancy, solve_backward_occupancy, solve_forward_occupancy, solve_forward_unrestricted,
    solve_forward_with_reward, OccupancyKind,
    OccupancyVector, StateActionChain, RESIDUAL_TOL, SUPPORT_TOL,
};
pub use td::{run_td_to_convergence, PairTransition, RewardMode, StepSchedule, TdRun, TdRunConfig, TdState};
