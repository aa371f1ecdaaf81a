//! Soft actor-critic with demonstrations, n-step and behaviour-cloning
//! losses, and success relabeling.

pub mod agent;
mod config;
pub mod losses;
pub mod metrics;
pub mod training;

pub use agent::{assemble_batch, greedy_action, pretrain, train_step, AgentNets, StepDiagnostics};
pub use config::SacConfig;
pub use metrics::{episodes_to, EpisodeRecord, MetricsLog, ROLLING_WINDOW};
pub use training::{evaluate_greedy, run_training, RunConfig, RunResult};

use thiserror::Error;

use crate::env::EnvError;
use crate::expert::ExpertError;
use crate::nn::NnError;
use crate::replay::ReplayError;

#[derive(Debug, Error)]
pub enum SacError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}
