//! Declarative experiment configs, ablation presets, multi-seed suites,
//! aggregate curves and SVG plots.

mod config;
pub mod curves;
pub mod plot;
mod presets;
pub mod suite;

pub use config::ExperimentConfig;
pub use curves::{CurveSummary, HEADLINE_THRESHOLD};
pub use plot::{render_svg, write_svg};
pub use presets::{preset, PRESETS};
pub use suite::{load_suite, run_suite, SeedOutcome, SeedStatus, SuiteOutcome};

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::env::EnvError;
use crate::replay::ReplayError;
use crate::sac::SacError;

/// Overrides the output root of every suite when set.
pub const OUTPUT_ROOT_VAR: &str = "SACR2_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown preset {0:?} (known: {known})", known = PRESETS.join(", "))]
    UnknownPreset(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(String),
    #[error("no curves to summarize or plot")]
    NoCurves,
    #[error("seed panicked: {0}")]
    SeedPanicked(String),
    #[error(transparent)]
    Run(#[from] SacError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Output root: explicit override, then the environment variable, then the config.
pub fn output_root(config: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => config.output_dir.clone(),
    }
}
