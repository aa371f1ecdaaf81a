//! Tanh-squashed Gaussian policy head on top of an [`Mlp`].
//!
//! The actor network outputs `2·d` columns: the first `d` are the mean, the
//! last `d` the (unclamped) log standard deviation.

use ndarray::{s, Array1, Array2, ArrayView2, Zip};

use super::{ForwardCache, Gradients, Mlp, NnError};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the log of the tanh Jacobian so saturated samples stay finite.
pub const SQUASH_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone)]
pub struct PolicyHeadOutput {
    pub mean: Array2<f64>,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Array2<f64>,
    pub pre_squash: Array2<f64>,
    pub action: Array2<f64>,
    pub log_prob: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct PolicyCache {
    net: ForwardCache,
    noise: Array2<f64>,
    /// 1 where the raw log-std was inside the clamp range, else 0.
    log_std_live: Array2<f64>,
}

pub fn action_dim(actor: &Mlp) -> usize {
    actor.output_dim() / 2
}

/// Reparameterized sample `a = tanh(μ + σ·ξ)` with its log-density.
pub fn policy_sample(
    actor: &Mlp,
    states: ArrayView2<f64>,
    noise: ArrayView2<f64>,
) -> Result<(PolicyHeadOutput, PolicyCache), NnError> {
    let d = action_dim(actor);
    if noise.dim() != (states.nrows(), d) {
        return Err(NnError::Shape(format!(
            "noise is {:?}, expected {:?}",
            noise.dim(),
            (states.nrows(), d)
        )));
    }
    let (out, net) = actor.forward(states)?;
    let mean = out.slice(s![.., ..d]).to_owned();
    let raw_log_std = out.slice(s![.., d..]);
    let log_std = raw_log_std.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    let log_std_live = raw_log_std.mapv(|v| {
        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&v) {
            1.0
        } else {
            0.0
        }
    });
    let mut pre_squash = mean.clone();
    Zip::from(&mut pre_squash)
        .and(&log_std)
        .and(&noise)
        .for_each(|u, &ls, &xi| *u += ls.exp() * xi);
    let action = pre_squash.mapv(f64::tanh);

    let mut log_prob = Array1::zeros(states.nrows());
    for (i, lp) in log_prob.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..d {
            let xi = noise[[i, j]];
            let t = action[[i, j]];
            acc += -0.5 * xi * xi - log_std[[i, j]] - HALF_LN_2PI;
            acc -= (1.0 - t * t + SQUASH_EPS).ln();
        }
        *lp = acc;
    }

    Ok((
        PolicyHeadOutput {
            mean,
            log_std,
            pre_squash,
            action,
            log_prob,
        },
        PolicyCache {
            net,
            noise: noise.to_owned(),
            log_std_live,
        },
    ))
}

/// Backpropagates through the policy head and actor network.
///
/// `d_action` and `d_log_prob` are the loss gradients w.r.t. the sampled
/// action and its log-density; `d_mean` optionally adds a gradient w.r.t.
/// the raw (pre-tanh) mean, as needed by losses on the deterministic action.
pub fn policy_backward(
    actor: &Mlp,
    out: &PolicyHeadOutput,
    cache: &PolicyCache,
    d_action: ArrayView2<f64>,
    d_log_prob: &Array1<f64>,
    d_mean: Option<ArrayView2<f64>>,
) -> Gradients {
    let (rows, d) = out.action.dim();
    let mut d_out = Array2::zeros((rows, 2 * d));
    for i in 0..rows {
        for j in 0..d {
            let t = out.action[[i, j]];
            let one_minus = 1.0 - t * t;
            let d_u = d_action[[i, j]] * one_minus
                + d_log_prob[i] * 2.0 * t * one_minus / (one_minus + SQUASH_EPS);
            let sigma_xi = out.log_std[[i, j]].exp() * cache.noise[[i, j]];
            d_out[[i, j]] = d_u;
            d_out[[i, d + j]] = (d_u * sigma_xi - d_log_prob[i]) * cache.log_std_live[[i, j]];
        }
    }
    if let Some(dm) = d_mean {
        let mut head = d_out.slice_mut(s![.., ..d]);
        head += &dm;
    }
    actor.backward(&cache.net, d_out.view()).0
}

/// Deterministic action `tanh(μ(s))` used for evaluation and behaviour cloning.
pub fn deterministic_action(actor: &Mlp, states: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
    let d = action_dim(actor);
    let out = actor.predict(states)?;
    Ok(out.slice(s![.., ..d]).mapv(f64::tanh))
}

/// Entropy of a diagonal Gaussian with the given log standard deviations.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 + HALF_LN_2PI + ls).sum()
}

/// Mean log-probability of a batch, handy for diagnostics.
pub fn mean_log_prob(out: &PolicyHeadOutput) -> f64 {
    out.log_prob.mean().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Single linear layer with zero weights: mean and log-std come from the bias.
    fn constant_actor(mean: &[f64], log_std: &[f64]) -> Mlp {
        let d = mean.len();
        let mut b = Array1::zeros(2 * d);
        for j in 0..d {
            b[j] = mean[j];
            b[d + j] = log_std[j];
        }
        Mlp::from_layers(vec![Dense { w: Array2::zeros((3, 2 * d)), b }], Activation::Tanh).unwrap()
    }

    #[test]
    fn zero_noise_gives_tanh_mean() {
        let actor = constant_actor(&[0.4, -1.3], &[-0.5, 0.1]);
        let s = Array2::zeros((2, 3));
        let (out, _) = policy_sample(&actor, s.view(), Array2::zeros((2, 2)).view()).unwrap();
        assert_eq!(out.action.row(0).to_vec(), vec![0.4f64.tanh(), (-1.3f64).tanh()]);
    }

    #[test]
    fn saturated_samples_have_finite_log_prob() {
        let actor = constant_actor(&[30.0], &[2.0]);
        let s = Array2::zeros((1, 3));
        let (out, _) = policy_sample(&actor, s.view(), array![[5.0]].view()).unwrap();
        assert!(out.log_prob[0].is_finite());
        assert!(out.action[[0, 0]] <= 1.0);
    }

    #[test]
    fn log_std_is_clamped() {
        let actor = constant_actor(&[0.0, 0.0], &[-40.0, 9.0]);
        let (out, _) =
            policy_sample(&actor, Array2::zeros((1, 3)).view(), Array2::zeros((1, 2)).view()).unwrap();
        assert_eq!(out.log_std.row(0).to_vec(), vec![LOG_STD_MIN, LOG_STD_MAX]);
    }

    /// E[log(1 − tanh²(u) + ε)] for u ~ N(μ, σ²), by composite Simpson quadrature.
    fn squash_correction_quadrature(mu: f64, sigma: f64) -> f64 {
        let n = 20_000;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / n as f64;
        let f = |z: f64| {
            let u = mu + sigma * z;
            let t = u.tanh();
            let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            pdf * (1.0 - t * t + SQUASH_EPS).ln()
        };
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            acc += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn monte_carlo_entropy_matches_closed_form() {
        let mean = [0.3, -0.8, 1.1];
        let log_std = [-0.4, 0.2, -1.0];
        let actor = constant_actor(&mean, &log_std);
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let (out, _) = policy_sample(&actor, Array2::zeros((n, 3)).view(), noise.view()).unwrap();
        let mc = -out.log_prob.mean().unwrap();
        let closed = gaussian_entropy(&log_std)
            + mean
                .iter()
                .zip(&log_std)
                .map(|(m, ls)| squash_correction_quadrature(*m, ls.exp()))
                .sum::<f64>();
        assert!(((mc - closed) / closed).abs() < 0.01, "mc {mc} closed {closed}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let actor = Mlp::new(&[3, 6, 4], Activation::Tanh, &mut rng);
        let states = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let noise = Array2::from_shape_fn((5, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let ca = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
        let cl = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
        let cm = Array2::from_shape_fn((5, 2), |_| rng.random_range(-1.0..1.0));
        // Loss = Σ ca⊙a + Σ cl⊙logπ + Σ cm⊙μ
        let loss = |net: &Mlp| {
            let (o, _) = policy_sample(net, states.view(), noise.view()).unwrap();
            (&o.action * &ca).sum() + (&o.log_prob * &cl).sum() + (&o.mean * &cm).sum()
        };
        let (out, cache) = policy_sample(&actor, states.view(), noise.view()).unwrap();
        let g = policy_backward(&actor, &out, &cache, ca.view(), &cl, Some(cm.view()));
        let h = 1e-6;
        let mut probe = actor.clone();
        for (k, a) in g.values().cloned().enumerate() {
            let orig = *probe.params().nth(k).unwrap();
            *probe.params_mut().nth(k).unwrap() = orig + h;
            let lp = loss(&probe);
            *probe.params_mut().nth(k).unwrap() = orig - h;
            let lm = loss(&probe);
            *probe.params_mut().nth(k).unwrap() = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - a).abs() / fd.abs().max(a.abs()).max(1e-6) < 1e-4, "{k}: {fd} vs {a}");
        }
    }
}
