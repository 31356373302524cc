//! Off-policy, non-adversarial imitation with a deterministic policy and a
//! state-conditioned discriminator, plus the exact tabular occupancy
//! machinery used to check it.

pub mod agent;
pub mod baselines;
pub mod demos;
pub mod disc;
pub mod envs;
pub mod error;
pub mod rng;
pub mod nn;
pub mod replay;
pub mod tabular;

pub use error::{Error, Result};
