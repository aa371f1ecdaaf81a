//! Central finite-difference checks of every hand-written loss gradient.
//!
//! Small tanh networks keep the losses smooth (no ReLU kinks), and log-std
//! outputs stay well inside their clamp, so a plain relative-error bound is
//! meaningful. Everything is deterministic given the seed.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{Activation, Gradients, Mlp};
use crate::sac::losses::{
    actor_loss, batch_targets, bc_loss, critic_loss_with_targets, NStepBatch, TrainBatch,
};
use crate::sac::{AgentNets, SacConfig, SacError};

/// Maximum accepted relative error between analytic and numeric gradients.
pub const TOLERANCE: f64 = 1e-4;

const STEP: f64 = 1e-6;
/// Below this magnitude both gradients are treated as zero.
const FLOOR: f64 = 1e-7;

const OBS: usize = 5;
const ACT: usize = 2;
const ROWS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn perturbed(net: &Mlp, i: usize, h: f64) -> Mlp {
    let mut n = net.clone();
    *n.params_mut().nth(i).expect("index in range") += h;
    n
}

/// Compares `grads` with central differences of `loss` over every parameter of `net`.
fn check_params(
    name: &str,
    net: &Mlp,
    grads: &Gradients,
    loss: impl Fn(&Mlp) -> Result<f64, SacError>,
) -> Result<CheckReport, SacError> {
    let analytic: Vec<f64> = grads.values().copied().collect();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let up = loss(&perturbed(net, i, STEP))?;
        let down = loss(&perturbed(net, i, -STEP))?;
        worst = worst.max(rel_error(a, (up - down) / (2.0 * STEP)));
    }
    Ok(CheckReport {
        name: name.to_string(),
        max_rel_error: worst,
        checked: analytic.len(),
    })
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

fn config(nstep: bool) -> SacConfig {
    SacConfig {
        hidden: vec![8, 8],
        activation: Activation::Tanh,
        nstep_loss: nstep,
        bc_loss: true,
        l2_actor: 1e-2,
        l2_critic: 1e-2,
        ..SacConfig::default()
    }
}

fn nets(cfg: &SacConfig, rng: &mut ChaCha8Rng) -> AgentNets {
    let mut nets = AgentNets::new(OBS, ACT, cfg, rng);
    // Distinct targets so the min over target critics is exercised.
    for p in nets.target1.params_mut().chain(nets.target2.params_mut()) {
        *p += rng.random_range(-0.1..0.1);
    }
    nets
}

fn batch(rng: &mut ChaCha8Rng, nstep: bool) -> TrainBatch {
    let done: Array1<f64> = (0..ROWS).map(|i| if i % 4 == 3 { 1.0 } else { 0.0 }).collect();
    let nstep = nstep.then(|| NStepBatch {
        ret: (0..ROWS).map(|_| rng.random_range(0.0..10.0)).collect(),
        s_n: uniform(rng, ROWS, OBS, -1.0, 1.0),
        done: (0..ROWS).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect(),
        discount: (0..ROWS).map(|i| 0.99f64.powi(1 + (i % 5) as i32)).collect(),
    });
    TrainBatch {
        s: uniform(rng, ROWS, OBS, -1.0, 1.0),
        a: uniform(rng, ROWS, ACT, -0.9, 0.9),
        r: (0..ROWS).map(|_| rng.random_range(0.0..5.0)).collect(),
        s_next: uniform(rng, ROWS, OBS, -1.0, 1.0),
        done,
        is_demo: (0..ROWS).map(|i| i % 3 != 1).collect(),
        weights: (0..ROWS).map(|_| rng.random_range(0.2..1.0)).collect(),
        nstep,
    }
}

fn noise(rng: &mut ChaCha8Rng) -> Array2<f64> {
    uniform(rng, ROWS, ACT, -1.5, 1.5)
}

/// Critic loss w.r.t. both critics, with the bootstrap targets held fixed.
pub fn check_critic(seed: u64, nstep: bool) -> Result<Vec<CheckReport>, SacError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = config(nstep);
    let nets = nets(&cfg, &mut rng);
    let b = batch(&mut rng, nstep);
    let z = noise(&mut rng);
    let (y1, y_n) = batch_targets(&b, &nets, &cfg, z.view(), 0.2)?;
    let base = critic_loss_with_targets(&b, &nets, &cfg, y1.clone(), y_n.clone())?;
    let tag = if nstep { "n-step" } else { "1-step" };
    let loss_with = |which: usize, net: &Mlp| {
        let mut n = nets.clone();
        if which == 1 {
            n.critic1 = net.clone();
        } else {
            n.critic2 = net.clone();
        }
        Ok(critic_loss_with_targets(&b, &n, &cfg, y1.clone(), y_n.clone())?.loss)
    };
    Ok(vec![
        check_params(&format!("critic1 {tag} + L2"), &nets.critic1, &base.grads1, |n| {
            loss_with(1, n)
        })?,
        check_params(&format!("critic2 {tag} + L2"), &nets.critic2, &base.grads2, |n| {
            loss_with(2, n)
        })?,
    ])
}

/// Actor loss (entropy, min-Q, BC and L2) w.r.t. the actor, critics fixed.
pub fn check_actor(seed: u64, q_filter: bool) -> Result<CheckReport, SacError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SacConfig {
        q_filter,
        ..config(false)
    };
    let nets = nets(&cfg, &mut rng);
    let b = batch(&mut rng, false);
    let z = noise(&mut rng);
    let alpha = 0.3;
    let base = actor_loss(&b, &nets, &cfg, z.view(), alpha)?;
    let name = if q_filter {
        "actor entropy + Q + BC(Q-filter) + L2"
    } else {
        "actor entropy + Q + BC + L2"
    };
    check_params(name, &nets.actor, &base.grads, |net| {
        let mut n = nets.clone();
        n.actor = net.clone();
        Ok(actor_loss(&b, &n, &cfg, z.view(), alpha)?.loss)
    })
}

/// Behaviour-cloning loss w.r.t. the raw policy mean.
pub fn check_bc(seed: u64) -> Result<CheckReport, SacError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = config(false);
    let nets = nets(&cfg, &mut rng);
    let b = batch(&mut rng, false);
    let mean = uniform(&mut rng, ROWS, ACT, -1.5, 1.5);
    let rows = b.demo_rows();
    let eval = |m: &Array2<f64>| -> Result<f64, SacError> {
        Ok(bc_loss(&nets.critic1, b.s.view(), b.a.view(), m.view(), &rows, false)?.loss)
    };
    let base = bc_loss(&nets.critic1, b.s.view(), b.a.view(), mean.view(), &rows, false)?;
    let mut worst: f64 = 0.0;
    for idx in 0..mean.len() {
        let (i, j) = (idx / ACT, idx % ACT);
        let mut up = mean.clone();
        up[[i, j]] += STEP;
        let mut down = mean.clone();
        down[[i, j]] -= STEP;
        let numeric = (eval(&up)? - eval(&down)?) / (2.0 * STEP);
        worst = worst.max(rel_error(base.d_mean[[i, j]], numeric));
    }
    Ok(CheckReport {
        name: "bc_loss w.r.t. policy mean".into(),
        max_rel_error: worst,
        checked: mean.len(),
    })
}

/// The full suite used by the CLI and the acceptance tests.
pub fn run_all(seed: u64) -> Result<Vec<CheckReport>, SacError> {
    let mut out = check_critic(seed, false)?;
    out.extend(check_critic(seed + 1, true)?);
    out.push(check_actor(seed + 2, false)?);
    out.push(check_actor(seed + 3, true)?);
    out.push(check_bc(seed + 4)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_gradients_match_finite_differences() {
        for r in run_all(11).unwrap() {
            assert!(r.passed(), "{} max rel error {:e}", r.name, r.max_rel_error);
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 4, 1], Activation::Tanh, &mut rng);
        let x = uniform(&mut rng, 6, 3, -1.0, 1.0);
        let loss = |n: &Mlp| -> Result<f64, SacError> { Ok(n.predict(x.view())?.sum()) };
        let (_, cache) = net.forward(x.view()).unwrap();
        let (mut grads, _) = net.backward(&cache, Array2::ones((6, 1)).view());
        assert!(check_params("ok", &net, &grads, loss).unwrap().passed());
        grads.layers[0].w[[0, 0]] *= 1.01;
        assert!(!check_params("bad", &net, &grads, loss).unwrap().passed());
    }
}
