//! Dense networks with hand-written reverse mode, Adam, Polyak averaging and
//! the squashed-Gaussian policy head. Everything is `f64`.

mod adam;
mod checkpoint;
mod mlp;
pub mod policy;

pub use adam::{AdamConfig, AdamState, ScalarAdam};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, Mlp};
pub use policy::{policy_backward, policy_sample, PolicyCache, PolicyHeadOutput};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Values that stop receiving gradient decay geometrically into the subnormal
/// range, where float arithmetic is two orders of magnitude slower.
pub(crate) fn flush_subnormal(x: &mut f64) {
    if x.is_subnormal() {
        *x = 0.0;
    }
}
