//! Planar kinematic reacher with a fully sparse reward.
//!
//! The arm is a chain of `num_joints` revolute joints anchored at the origin.
//! Actions are per-joint angle deltas in `[-1, 1]`, scaled by `action_scale`.
//! An episode ends when the end effector comes within `reach_threshold` of the
//! target (reward `sparse_reward`) or after `max_steps` steps (reward 0).

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Fixed bend on the second joint of the home pose, in radians.
pub const HOME_BEND: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("step called on a terminal state (step {step_count})")]
    TerminalState { step_count: usize },
    #[error("action has {got} components, expected {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("observation has {got} components, expected {expected}")]
    ObservationDim { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub num_joints: usize,
    pub link_lengths: Vec<f64>,
    /// Maximum joint delta per step, radians.
    pub action_scale: f64,
    pub reach_threshold: f64,
    pub max_steps: usize,
    pub sparse_reward: f64,
    /// Annulus `[r_min, r_max]` around the base in which targets are drawn.
    pub target_region: [f64; 2],
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_joints: 4,
            link_lengths: vec![0.25; 4],
            action_scale: 0.05,
            reach_threshold: 0.05,
            max_steps: 100,
            sparse_reward: 100.0,
            target_region: [0.3, 0.95],
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidConfig(msg));
        if self.num_joints < 2 {
            return bad(format!("num_joints must be >= 2, got {}", self.num_joints));
        }
        if self.link_lengths.len() != self.num_joints {
            return bad(format!(
                "link_lengths has {} entries for {} joints",
                self.link_lengths.len(),
                self.num_joints
            ));
        }
        if self.link_lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return bad("link lengths must be positive".into());
        }
        let [r_min, r_max] = self.target_region;
        if !(0.0 <= r_min && r_min <= r_max) {
            return bad(format!("target_region [{r_min}, {r_max}] is not an annulus"));
        }
        if r_max > self.reach() {
            return bad(format!("r_max {r_max} exceeds arm reach {}", self.reach()));
        }
        if !(self.reach_threshold > 0.0) {
            return bad("reach_threshold must be > 0".into());
        }
        if self.max_steps < 1 {
            return bad("max_steps must be >= 1".into());
        }
        if !(self.action_scale > 0.0) {
            return bad("action_scale must be > 0".into());
        }
        Ok(())
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn obs_dim(&self) -> usize {
        3 * self.num_joints + 4
    }

    pub fn action_dim(&self) -> usize {
        self.num_joints
    }

    /// Stable identifier of this configuration, used to tag demonstration files.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("env config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn home_pose(&self) -> Vec<f64> {
        let mut angles = vec![0.0; self.num_joints];
        angles[1] = HOME_BEND;
        angles
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReacherState {
    pub joint_angles: Vec<f64>,
    /// Last applied per-joint delta, radians per step.
    pub joint_velocities: Vec<f64>,
    pub ee_position: [f64; 2],
    pub target_position: [f64; 2],
    pub step_count: usize,
    pub terminal: bool,
}

impl ReacherState {
    pub fn distance_to_target(&self) -> f64 {
        distance(self.ee_position, self.target_position)
    }

    /// Rebuilds a state from an observation vector (angles recovered from sin/cos).
    /// The step counter restarts at zero.
    pub fn from_observation(obs: &[f64], config: &EnvConfig) -> Result<Self, EnvError> {
        if obs.len() != config.obs_dim() {
            return Err(EnvError::ObservationDim {
                expected: config.obs_dim(),
                got: obs.len(),
            });
        }
        let n = config.num_joints;
        let joint_angles: Vec<f64> = (0..n).map(|i| obs[2 * i].atan2(obs[2 * i + 1])).collect();
        let joint_velocities = obs[2 * n..3 * n].to_vec();
        let target_position = [obs[3 * n + 2], obs[3 * n + 3]];
        let ee_position = forward_kinematics(&joint_angles, &config.link_lengths);
        Ok(Self {
            joint_angles,
            joint_velocities,
            ee_position,
            target_position,
            step_count: 0,
            terminal: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: ReacherState,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// End-effector position of a planar chain.
pub fn forward_kinematics(joint_angles: &[f64], link_lengths: &[f64]) -> [f64; 2] {
    let mut heading = 0.0;
    let mut pos = [0.0, 0.0];
    for (theta, len) in joint_angles.iter().zip(link_lengths) {
        heading += theta;
        pos[0] += len * heading.cos();
        pos[1] += len * heading.sin();
    }
    pos
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Observation layout: `(sin θᵢ, cos θᵢ)` per joint, joint velocities,
/// end-effector xy, target xy.
pub fn observe(state: &ReacherState) -> Vec<f64> {
    let n = state.joint_angles.len();
    let mut obs = Vec::with_capacity(3 * n + 4);
    for theta in &state.joint_angles {
        obs.push(theta.sin());
        obs.push(theta.cos());
    }
    obs.extend_from_slice(&state.joint_velocities);
    obs.extend_from_slice(&state.ee_position);
    obs.extend_from_slice(&state.target_position);
    obs
}

#[derive(Debug, Clone)]
pub struct Reacher {
    config: EnvConfig,
}

impl Reacher {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Home pose with a target drawn uniformly by area from the annulus.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> ReacherState {
        let [r_min, r_max] = self.config.target_region;
        let u: f64 = rng.random();
        let radius = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        self.reset_with_target([radius * angle.cos(), radius * angle.sin()])
    }

    pub fn reset_with_target(&self, target: [f64; 2]) -> ReacherState {
        let joint_angles = self.config.home_pose();
        let ee_position = forward_kinematics(&joint_angles, &self.config.link_lengths);
        ReacherState {
            joint_velocities: vec![0.0; self.config.num_joints],
            joint_angles,
            ee_position,
            target_position: target,
            step_count: 0,
            terminal: false,
        }
    }

    pub fn step(&self, state: &ReacherState, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if state.terminal {
            return Err(EnvError::TerminalState {
                step_count: state.step_count,
            });
        }
        if action.len() != self.config.num_joints {
            return Err(EnvError::ActionDim {
                expected: self.config.num_joints,
                got: action.len(),
            });
        }
        let mut next = state.clone();
        for ((theta, vel), a) in next
            .joint_angles
            .iter_mut()
            .zip(next.joint_velocities.iter_mut())
            .zip(action)
        {
            let delta = self.config.action_scale * a.clamp(-1.0, 1.0);
            *theta += delta;
            *vel = delta;
        }
        next.ee_position = forward_kinematics(&next.joint_angles, &self.config.link_lengths);
        next.step_count += 1;

        let success = next.distance_to_target() < self.config.reach_threshold;
        let done = success || next.step_count >= self.config.max_steps;
        next.terminal = done;
        let reward = if success { self.config.sparse_reward } else { 0.0 };
        Ok(StepOutcome {
            state: next,
            reward,
            done,
            success,
        })
    }
}
