//! Critic, actor and behaviour-cloning losses with their analytic gradients.
//!
//! Every function here is deterministic given the batch and the noise
//! matrices passed in; the training loop owns all randomness.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{AgentNets, SacConfig, SacError};
use crate::nn::{policy_backward, policy_sample, Gradients, Mlp};

/// One-step and optional n-step views of a sampled batch, as dense arrays.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array1<f64>,
    pub s_next: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub done: Array1<f64>,
    pub is_demo: Vec<bool>,
    /// Importance-sampling weights (all ones when disabled).
    pub weights: Array1<f64>,
    pub nstep: Option<NStepBatch>,
}

#[derive(Debug, Clone)]
pub struct NStepBatch {
    pub ret: Array1<f64>,
    pub s_n: Array2<f64>,
    pub done: Array1<f64>,
    /// `γ^steps_used` per sample.
    pub discount: Array1<f64>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn demo_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_demo[i]).collect()
    }
}

pub(crate) fn stack_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let mut out = Array2::zeros((n, width));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&ArrayView1::from(src));
    }
    out
}

fn critic_input(s: ArrayView2<f64>, a: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[s, a]).expect("row counts match")
}

/// Soft Bellman target `y = r + discount·(1 − done)·(min Q̄(s', a') − α log π(a'|s'))`
/// with `a'` drawn from the current policy using `noise`. No gradient flows through it.
pub fn critic_targets(
    nets: &AgentNets,
    r: ArrayView1<f64>,
    s_next: ArrayView2<f64>,
    done: ArrayView1<f64>,
    discount: ArrayView1<f64>,
    noise: ArrayView2<f64>,
    alpha: f64,
) -> Result<Array1<f64>, SacError> {
    let (pol, _) = policy_sample(&nets.actor, s_next, noise)?;
    let x = critic_input(s_next, pol.action.view());
    let q1 = nets.target1.predict(x.view())?;
    let q2 = nets.target2.predict(x.view())?;
    let mut y = r.to_owned();
    for i in 0..y.len() {
        if done[i] != 0.0 {
            continue;
        }
        let soft = q1[[i, 0]].min(q2[[i, 0]]) - alpha * pol.log_prob[i];
        y[i] += discount[i] * soft;
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub loss: f64,
    /// `|Q₁(s, a) − y₁|` per sample.
    pub td_errors: Vec<f64>,
    pub grads1: Gradients,
    pub grads2: Gradients,
    pub q1_mean: f64,
    pub y1: Array1<f64>,
    pub y_n: Option<Array1<f64>>,
}

/// Targets for the one-step and (when present) n-step losses. The same
/// target-policy noise is used for both so that `n = 1` reproduces `y₁`.
pub fn batch_targets(
    batch: &TrainBatch,
    nets: &AgentNets,
    config: &SacConfig,
    noise: ArrayView2<f64>,
    alpha: f64,
) -> Result<(Array1<f64>, Option<Array1<f64>>), SacError> {
    let gamma = Array1::from_elem(batch.len(), config.gamma);
    let y1 = critic_targets(
        nets,
        batch.r.view(),
        batch.s_next.view(),
        batch.done.view(),
        gamma.view(),
        noise,
        alpha,
    )?;
    let y_n = match &batch.nstep {
        Some(ns) => Some(critic_targets(
            nets,
            ns.ret.view(),
            ns.s_n.view(),
            ns.done.view(),
            ns.discount.view(),
            noise,
            alpha,
        )?),
        None => None,
    };
    Ok((y1, y_n))
}

/// `Σ_c [mean w(Q_c − y₁)² + λ_n·mean w(Q_c − y_n)²] + l2·Σ_c ‖W_c‖²` over both critics.
pub fn critic_loss(
    batch: &TrainBatch,
    nets: &AgentNets,
    config: &SacConfig,
    target_noise: ArrayView2<f64>,
    alpha: f64,
) -> Result<CriticLoss, SacError> {
    let (y1, y_n) = batch_targets(batch, nets, config, target_noise, alpha)?;
    critic_loss_with_targets(batch, nets, config, y1, y_n)
}

pub fn critic_loss_with_targets(
    batch: &TrainBatch,
    nets: &AgentNets,
    config: &SacConfig,
    y1: Array1<f64>,
    y_n: Option<Array1<f64>>,
) -> Result<CriticLoss, SacError> {
    let n = batch.len() as f64;
    let x = critic_input(batch.s.view(), batch.a.view());
    let lambda_n = config.lambda_n;
    let mut loss = 0.0;
    let mut td_errors = Vec::new();
    let mut q1_mean = 0.0;
    let mut grads = Vec::with_capacity(2);
    for (c, critic) in [&nets.critic1, &nets.critic2].into_iter().enumerate() {
        let (q, cache) = critic.forward(x.view())?;
        let mut d_q = Array2::zeros((batch.len(), 1));
        for i in 0..batch.len() {
            let w = batch.weights[i];
            let e1 = q[[i, 0]] - y1[i];
            loss += w * e1 * e1 / n;
            let mut g = 2.0 * w * e1 / n;
            if let Some(yn) = &y_n {
                let en = q[[i, 0]] - yn[i];
                loss += lambda_n * w * en * en / n;
                g += 2.0 * lambda_n * w * en / n;
            }
            d_q[[i, 0]] = g;
        }
        if c == 0 {
            td_errors = (0..batch.len()).map(|i| (q[[i, 0]] - y1[i]).abs()).collect();
            q1_mean = q.mean().unwrap_or(0.0);
        }
        let (mut gr, _) = critic.backward(&cache, d_q.view());
        loss += config.l2_critic * critic.weight_sq_norm();
        critic.add_l2_grad(&mut gr, config.l2_critic);
        grads.push(gr);
    }
    let grads2 = grads.pop().expect("two critics");
    let grads1 = grads.pop().expect("two critics");
    Ok(CriticLoss {
        loss,
        td_errors,
        grads1,
        grads2,
        q1_mean,
        y1,
        y_n,
    })
}

#[derive(Debug, Clone)]
pub struct BcLoss {
    pub loss: f64,
    /// Gradient of the (unweighted) loss w.r.t. the raw mean, one row per batch sample.
    pub d_mean: Array2<f64>,
    /// Demo rows whose term survived the Q-filter.
    pub active: usize,
}

/// Mean over demo rows of `‖tanh(μ(s)) − a_demo‖²`, optionally keeping only
/// rows where `Q₁(s, a_demo) > Q₁(s, tanh(μ(s)))`.
///
/// `mean` is the actor's raw mean for every batch row; only `demo_rows` contribute.
pub fn bc_loss(
    critic1: &Mlp,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    mean: ArrayView2<f64>,
    demo_rows: &[usize],
    q_filter: bool,
) -> Result<BcLoss, SacError> {
    let mut d_mean = Array2::zeros(mean.dim());
    if demo_rows.is_empty() {
        return Ok(BcLoss {
            loss: 0.0,
            d_mean,
            active: 0,
        });
    }
    let pi = mean.select(Axis(0), demo_rows).mapv(f64::tanh);
    let a_demo = actions.select(Axis(0), demo_rows);
    let keep: Vec<bool> = if q_filter {
        let s_demo = states.select(Axis(0), demo_rows);
        let q_demo = critic1.predict(critic_input(s_demo.view(), a_demo.view()).view())?;
        let q_pi = critic1.predict(critic_input(s_demo.view(), pi.view()).view())?;
        (0..demo_rows.len())
            .map(|k| q_demo[[k, 0]] > q_pi[[k, 0]])
            .collect()
    } else {
        vec![true; demo_rows.len()]
    };
    let m = demo_rows.len() as f64;
    let mut loss = 0.0;
    let mut active = 0;
    for (k, &row) in demo_rows.iter().enumerate() {
        if !keep[k] {
            continue;
        }
        active += 1;
        for j in 0..pi.ncols() {
            let t = pi[[k, j]];
            let diff = t - a_demo[[k, j]];
            loss += diff * diff / m;
            d_mean[[row, j]] = 2.0 * diff * (1.0 - t * t) / m;
        }
    }
    Ok(BcLoss {
        loss,
        d_mean,
        active,
    })
}

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Gradients,
    /// `α·log π(ã|s) − min Q(s, ã)` per sample.
    pub per_sample: Vec<f64>,
    pub bc: f64,
    pub log_prob_mean: f64,
}

/// `mean[α log π(ã|s) − min(Q₁, Q₂)(s, ã)] + λ_BC·L_BC + l2·‖W_actor‖²`
/// with `ã` reparameterized through `noise`. Critics are held fixed.
pub fn actor_loss(
    batch: &TrainBatch,
    nets: &AgentNets,
    config: &SacConfig,
    noise: ArrayView2<f64>,
    alpha: f64,
) -> Result<ActorLoss, SacError> {
    let rows = batch.len();
    let n = rows as f64;
    let (pol, cache) = policy_sample(&nets.actor, batch.s.view(), noise)?;
    let obs_dim = batch.s.ncols();
    let x = critic_input(batch.s.view(), pol.action.view());
    let (q1, c1) = nets.critic1.forward(x.view())?;
    let (q2, c2) = nets.critic2.forward(x.view())?;

    let mut d_q1 = Array2::zeros((rows, 1));
    let mut d_q2 = Array2::zeros((rows, 1));
    let mut per_sample = Vec::with_capacity(rows);
    let mut loss = 0.0;
    for i in 0..rows {
        let (qa, qb) = (q1[[i, 0]], q2[[i, 0]]);
        let q_min = if qa <= qb {
            d_q1[[i, 0]] = -1.0 / n;
            qa
        } else {
            d_q2[[i, 0]] = -1.0 / n;
            qb
        };
        let term = alpha * pol.log_prob[i] - q_min;
        per_sample.push(term);
        loss += term / n;
    }
    let (_, dx1) = nets.critic1.backward(&c1, d_q1.view());
    let (_, dx2) = nets.critic2.backward(&c2, d_q2.view());
    let d_action = (&dx1 + &dx2).slice(s![.., obs_dim..]).to_owned();
    let d_log_prob = Array1::from_elem(rows, alpha / n);

    let mut bc_value = 0.0;
    let d_mean = if config.bc_loss {
        let bc = bc_loss(
            &nets.critic1,
            batch.s.view(),
            batch.a.view(),
            pol.mean.view(),
            &batch.demo_rows(),
            config.q_filter,
        )?;
        bc_value = bc.loss;
        loss += config.lambda_bc * bc.loss;
        Some(bc.d_mean * config.lambda_bc)
    } else {
        None
    };

    let mut grads = policy_backward(
        &nets.actor,
        &pol,
        &cache,
        d_action.view(),
        &d_log_prob,
        d_mean.as_ref().map(|d| d.view()),
    );
    loss += config.l2_actor * nets.actor.weight_sq_norm();
    nets.actor.add_l2_grad(&mut grads, config.l2_actor);

    Ok(ActorLoss {
        loss,
        grads,
        per_sample,
        bc: bc_value,
        log_prob_mean: pol.log_prob.mean().unwrap_or(0.0),
    })
}
