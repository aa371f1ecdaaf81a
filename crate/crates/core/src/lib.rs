//! Soft actor-critic with demonstrations and reward relabeling on a planar
//! sparse-reward reacher.

pub mod env;
pub mod expert;
pub mod nn;
pub mod replay;
pub mod sac;
pub mod gradcheck;
pub mod harness;
