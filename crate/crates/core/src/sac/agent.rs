use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::losses::{actor_loss, critic_loss, stack_rows, NStepBatch, TrainBatch};
use super::{SacConfig, SacError};
use crate::nn::{policy::deterministic_action, AdamConfig, AdamState, Mlp, ScalarAdam};
use crate::replay::{PriorityMode, ReplayStore, SampledBatch};

/// Actor, twin critics, their target copies and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub actor_opt: AdamState,
    pub critic1_opt: AdamState,
    pub critic2_opt: AdamState,
    pub log_alpha: f64,
    pub alpha_opt: ScalarAdam,
}

impl AgentNets {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        config: &SacConfig,
        rng: &mut R,
    ) -> Self {
        let sizes = |input: usize, output: usize| {
            let mut v = vec![input];
            v.extend_from_slice(&config.hidden);
            v.push(output);
            v
        };
        let actor = Mlp::new(&sizes(obs_dim, 2 * action_dim), config.activation, rng);
        let critic1 = Mlp::new(&sizes(obs_dim + action_dim, 1), config.activation, rng);
        let critic2 = Mlp::new(&sizes(obs_dim + action_dim, 1), config.activation, rng);
        let adam = |lr: f64| AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        Self {
            actor_opt: AdamState::new(&actor, adam(config.actor_lr)),
            critic1_opt: AdamState::new(&critic1, adam(config.critic_lr)),
            critic2_opt: AdamState::new(&critic2, adam(config.critic_lr)),
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            log_alpha: config.alpha.max(1e-12).ln(),
            alpha_opt: ScalarAdam::new(adam(config.alpha_lr)),
        }
    }

    pub fn alpha(&self, config: &SacConfig) -> f64 {
        if config.auto_alpha {
            self.log_alpha.exp()
        } else {
            config.alpha
        }
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim() / 2
    }

    pub fn all_finite(&self) -> bool {
        [&self.actor, &self.critic1, &self.critic2, &self.target1, &self.target2]
            .iter()
            .all(|n| n.all_finite())
    }
}

/// Per-update statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub bc_loss: f64,
    pub q_mean: f64,
    pub alpha: f64,
    pub log_prob_mean: f64,
    pub demo_fraction: f64,
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Dense arrays for a sampled batch, with n-step returns when the loss needs them.
/// Bootstrap mask entry: a step-limit cutoff is not a true terminal when
/// the config says to bootstrap through it.
fn terminal(done: bool, truncated: bool, config: &SacConfig) -> f64 {
    if done && !(truncated && config.bootstrap_truncated) {
        1.0
    } else {
        0.0
    }
}

pub fn assemble_batch(
    sampled: &SampledBatch,
    store: &ReplayStore,
    config: &SacConfig,
) -> Result<TrainBatch, SacError> {
    let ts = &sampled.transitions;
    let obs = ts[0].s.len();
    let act = ts[0].a.len();
    let nstep = if config.nstep_loss {
        let mut ret = Array1::zeros(ts.len());
        let mut done = Array1::zeros(ts.len());
        let mut discount = Array1::zeros(ts.len());
        let mut next = Vec::with_capacity(ts.len());
        for (i, h) in sampled.handles.iter().enumerate() {
            let ns = store.assemble_nstep(h, config.n_step, config.gamma)?;
            ret[i] = ns.ret;
            done[i] = terminal(ns.done, ns.truncated, config);
            discount[i] = config.gamma.powi(ns.steps_used as i32);
            next.push(ns.next_obs);
        }
        Some(NStepBatch {
            ret,
            s_n: stack_rows(next.iter().map(Vec::as_slice), obs),
            done,
            discount,
        })
    } else {
        None
    };
    Ok(TrainBatch {
        s: stack_rows(ts.iter().map(|t| t.s.as_slice()), obs),
        a: stack_rows(ts.iter().map(|t| t.a.as_slice()), act),
        r: ts.iter().map(|t| t.r).collect(),
        s_next: stack_rows(ts.iter().map(|t| t.s_next.as_slice()), obs),
        done: ts.iter().map(|t| terminal(t.done, t.truncated, config)).collect(),
        is_demo: ts.iter().map(|t| t.is_demo).collect(),
        weights: Array1::from(sampled.weights.clone()),
        nstep,
    })
}

/// One SAC update: critics, actor, temperature, targets, then priorities.
pub fn train_step<R: Rng + ?Sized>(
    nets: &mut AgentNets,
    store: &mut ReplayStore,
    config: &SacConfig,
    rng: &mut R,
) -> Result<StepDiagnostics, SacError> {
    let sampled = store.sample_batch(config.batch_size, rng)?;
    let batch = assemble_batch(&sampled, store, config)?;
    let act_dim = nets.action_dim();
    let target_noise = standard_normal(batch.len(), act_dim, rng);
    let actor_noise = standard_normal(batch.len(), act_dim, rng);
    let alpha = nets.alpha(config);

    let critic = critic_loss(&batch, nets, config, target_noise.view(), alpha)?;
    if !critic.loss.is_finite() {
        return Err(SacError::NonFinite(format!(
            "critic loss {} (q mean {}, alpha {alpha})",
            critic.loss, critic.q1_mean
        )));
    }
    nets.critic1_opt.step(&mut nets.critic1, &critic.grads1)?;
    nets.critic2_opt.step(&mut nets.critic2, &critic.grads2)?;

    let actor = actor_loss(&batch, nets, config, actor_noise.view(), alpha)?;
    if !actor.loss.is_finite() {
        return Err(SacError::NonFinite(format!(
            "actor loss {} (bc {}, log prob {}, alpha {alpha})",
            actor.loss, actor.bc, actor.log_prob_mean
        )));
    }
    nets.actor_opt.step(&mut nets.actor, &actor.grads)?;

    if config.auto_alpha {
        let target = config
            .target_entropy
            .unwrap_or(-(act_dim as f64));
        // d/d(log α) of −log α·(log π + H̄)
        let grad = -(actor.log_prob_mean + target);
        nets.alpha_opt.step(&mut nets.log_alpha, grad);
    }

    nets.target1.polyak_update(&nets.critic1, config.tau)?;
    nets.target2.polyak_update(&nets.critic2, config.tau)?;

    let actor_terms = match store.config().priority {
        PriorityMode::Modified => Some(actor.per_sample.as_slice()),
        PriorityMode::Standard => None,
    };
    store.update_priorities(&sampled.handles, &critic.td_errors, actor_terms);

    Ok(StepDiagnostics {
        critic_loss: critic.loss,
        actor_loss: actor.loss,
        bc_loss: actor.bc,
        q_mean: critic.q1_mean,
        alpha,
        log_prob_mean: actor.log_prob_mean,
        demo_fraction: sampled.demo_fraction(),
    })
}

/// `config.pretrain_iters` updates on whatever the store holds, no interaction.
pub fn pretrain<R: Rng + ?Sized>(
    nets: &mut AgentNets,
    store: &mut ReplayStore,
    config: &SacConfig,
    rng: &mut R,
) -> Result<Vec<StepDiagnostics>, SacError> {
    (0..config.pretrain_iters)
        .map(|_| train_step(nets, store, config, rng))
        .collect()
}

/// Greedy action `tanh(μ(s))` for one observation.
pub fn greedy_action(nets: &AgentNets, obs: &[f64]) -> Result<Vec<f64>, SacError> {
    let x = stack_rows(std::iter::once(obs), obs.len());
    Ok(deterministic_action(&nets.actor, x.view())?.row(0).to_vec())
}
