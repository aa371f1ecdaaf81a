use serde::{Deserialize, Serialize};

use super::SacError;
use crate::nn::Activation;

/// Learner hyperparameters and the per-mechanism ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub gamma: f64,
    /// Bootstrap through step-limit cutoffs instead of treating them as
    /// terminal. The observation carries no clock, so a cutoff is not a
    /// property of the state.
    pub bootstrap_truncated: bool,
    /// Entropy coefficient; the initial value when `auto_alpha` is on.
    pub alpha: f64,
    pub auto_alpha: bool,
    /// Defaults to `-action_dim` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_entropy: Option<f64>,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    /// Expected number of updates per collected transition.
    pub replay_ratio: usize,

    pub nstep_loss: bool,
    pub n_step: usize,
    pub lambda_n: f64,

    pub bc_loss: bool,
    pub lambda_bc: f64,
    pub q_filter: bool,

    pub l2_actor: f64,
    pub l2_critic: f64,

    /// Reward bonus for demo transitions and relabeled success windows.
    pub b: f64,
    pub relabel_success: bool,
    /// Relabel window `N`; defaults to the rounded mean demo length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relabel_window: Option<usize>,

    pub pretrain_iters: usize,
    pub random_steps: usize,
    pub reset_to_demo_prob: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            bootstrap_truncated: false,
            alpha: 0.2,
            auto_alpha: false,
            target_entropy: None,
            tau: 0.005,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            alpha_lr: 3e-4,
            hidden: vec![128, 128],
            activation: Activation::Relu,
            batch_size: 64,
            replay_ratio: 32,
            nstep_loss: false,
            n_step: 5,
            lambda_n: 1.0,
            bc_loss: false,
            lambda_bc: 2.0,
            q_filter: false,
            l2_actor: 1e-4,
            l2_critic: 1e-4,
            b: 5.0,
            relabel_success: true,
            relabel_window: None,
            pretrain_iters: 3000,
            random_steps: 1000,
            reset_to_demo_prob: 0.0,
        }
    }
}

impl SacConfig {
    /// Environment steps taken per gradient update.
    pub fn env_steps_per_train(&self) -> usize {
        self.batch_size / self.replay_ratio
    }

    pub fn validate(&self) -> Result<(), SacError> {
        let bad = |m: String| Err(SacError::InvalidConfig(m));
        if self.batch_size == 0 || self.replay_ratio == 0 {
            return bad("batch_size and replay_ratio must be positive".into());
        }
        if self.batch_size % self.replay_ratio != 0 || self.env_steps_per_train() < 1 {
            return bad(format!(
                "batch_size {} must be a positive multiple of replay_ratio {}",
                self.batch_size, self.replay_ratio
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0, 1]", self.tau));
        }
        if !(0.0..=1.0).contains(&self.reset_to_demo_prob) {
            return bad("reset_to_demo_prob outside [0, 1]".into());
        }
        if self.n_step < 1 {
            return bad("n_step must be >= 1".into());
        }
        if self.hidden.iter().any(|h| *h == 0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if self.relabel_window.is_some_and(|n| n < 2) {
            return bad("relabel_window must be >= 2".into());
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda_n", self.lambda_n),
            ("lambda_bc", self.lambda_bc),
            ("l2_actor", self.l2_actor),
            ("l2_critic", self.l2_critic),
            ("b", self.b),
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("alpha_lr", self.alpha_lr),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_two_env_steps_per_update() {
        let c = SacConfig::default();
        c.validate().unwrap();
        assert_eq!(c.env_steps_per_train(), 2);
    }

    #[test]
    fn rejects_incompatible_replay_ratio() {
        let c = SacConfig {
            replay_ratio: 128,
            ..SacConfig::default()
        };
        assert!(c.validate().is_err());
        let c = SacConfig {
            replay_ratio: 24,
            ..SacConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
