use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::env::EnvConfig;
use crate::expert::ExpertConfig;
use crate::replay::ReplayConfig;
use crate::sac::{RunConfig, SacConfig};

/// Everything needed to launch a multi-seed suite. Scalars come first so the
/// TOML form puts them above the `[env]`, `[expert]`, `[agent]` and `[replay]`
/// tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_budget")]
    pub max_env_steps: usize,
    /// End a seed early once its full-window rolling success reaches this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_success: Option<f64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub expert: ExpertConfig,
    #[serde(default)]
    pub agent: SacConfig,
    #[serde(default)]
    pub replay: ReplayConfig,
}

fn default_seeds() -> usize {
    4
}

fn default_budget() -> usize {
    150_000
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "custom".into(),
            n_seeds: default_seeds(),
            base_seed: 0,
            max_env_steps: default_budget(),
            stop_at_success: None,
            output_dir: default_output(),
            env: EnvConfig::default(),
            expert: ExpertConfig::default(),
            agent: SacConfig::default(),
            replay: ReplayConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; parsing it back yields an equal config.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_toml_string()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_seeds == 0 {
            return Err(HarnessError::Config("n_seeds must be >= 1".into()));
        }
        if self.max_env_steps == 0 {
            return Err(HarnessError::Config("max_env_steps must be >= 1".into()));
        }
        if self.preset.is_empty() || self.preset.contains(['/', '\\']) {
            return Err(HarnessError::Config(format!(
                "preset name {:?} cannot be used as a directory name",
                self.preset
            )));
        }
        self.env.validate()?;
        self.agent.validate()?;
        self.replay.validate()?;
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(|i| self.base_seed + i)
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            env: self.env.clone(),
            expert: self.expert.clone(),
            agent: self.agent.clone(),
            replay: self.replay.clone(),
            max_env_steps: self.max_env_steps,
            stop_at_success: self.stop_at_success,
        }
    }

    /// Fingerprint of everything that influences a single seed's results.
    /// Output location and seed count are deliberately left out.
    pub fn run_fingerprint(&self) -> String {
        let text = toml::to_string(&self.run_config()).expect("run config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_stable() {
        let cfg = ExperimentConfig {
            stop_at_success: Some(0.9),
            ..ExperimentConfig::default()
        };
        let text = cfg.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::from_toml_str("preset = \"x\"\n[agent]\nbogus_knob = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus_knob"), "{err}");
        let err = ExperimentConfig::from_toml_str("preset = \"x\"\nsurprise = 2\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("surprise"), "{err}");
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg = ExperimentConfig::from_toml_str("preset = \"mine\"\n[agent]\nb = 10.0\n").unwrap();
        assert_eq!(cfg.agent.b, 10.0);
        assert_eq!(cfg.n_seeds, 4);
        assert_eq!(cfg.max_env_steps, 150_000);
    }

    #[test]
    fn fingerprint_ignores_output_location() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: "elsewhere".into(),
            n_seeds: 9,
            ..a.clone()
        };
        assert_eq!(a.run_fingerprint(), b.run_fingerprint());
        let c = ExperimentConfig {
            max_env_steps: 10,
            ..a.clone()
        };
        assert_ne!(a.run_fingerprint(), c.run_fingerprint());
    }
}
