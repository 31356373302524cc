//! Small fully-connected networks with hand-written reverse-mode gradients,
//! Adam, and target-network blending.

mod adam;
pub mod checkpoint;
mod mlp;

pub use adam::{target_update, AdamConfig, AdamState, TargetUpdate};
pub use mlp::{sigmoid, Activation, ForwardCache, Layer, Mlp, MlpParams, MlpSpec};
