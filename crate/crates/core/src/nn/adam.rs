use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{flush_subnormal, Gradients, Mlp, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            m: net.zero_grads(),
            v: net.zero_grads(),
            t: 0,
        }
    }

    /// Bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<(), NnError> {
        let shapes_match = params.layers.len() == grads.layers.len()
            && params
                .layers
                .iter()
                .zip(&grads.layers)
                .all(|(p, g)| p.w.dim() == g.w.dim() && p.b.len() == g.b.len());
        if !shapes_match || grads.layers.len() != self.m.layers.len() {
            return Err(NnError::Shape("adam step on mismatched shapes".into()));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            flush_subnormal(p);
            flush_subnormal(m);
            flush_subnormal(v);
        };
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            Zip::from(&mut p.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(update);
            Zip::from(&mut p.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(update);
        }
        Ok(())
    }
}

/// Adam for a single scalar parameter (the log entropy coefficient).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarAdam {
    pub config: AdamConfig,
    m: f64,
    v: f64,
    t: u64,
}

impl ScalarAdam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        let c = self.config;
        self.t += 1;
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * grad;
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * grad * grad;
        let m_hat = self.m / (1.0 - c.beta1.powi(self.t as i32));
        let v_hat = self.v / (1.0 - c.beta2.powi(self.t as i32));
        *param -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net_and_grads(seed: u64) -> (Mlp, Gradients) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&[3, 4, 2], Activation::Relu, &mut rng);
        let mut g = net.zero_grads();
        for l in &mut g.layers {
            l.w.mapv_inplace(|_| rng.random_range(-2.0..2.0));
            l.b.mapv_inplace(|_| rng.random_range(-2.0..2.0));
        }
        (net, g)
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let (net, g) = net_and_grads(0);
        let mut p = net.clone();
        let mut st = AdamState::new(&net, AdamConfig::default());
        st.step(&mut p, &g).unwrap();
        for ((new, old), gv) in p.params().zip(net.params()).zip(g.values()) {
            let delta = new - old;
            let expected = -3e-4 * gv.signum();
            assert!((delta - expected).abs() <= 0.01 * 3e-4, "{delta} vs {expected}");
        }
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let (net, _) = net_and_grads(1);
        let mut p = net.clone();
        let mut st = AdamState::new(&net, AdamConfig::default());
        let zero = net.zero_grads();
        for _ in 0..100 {
            st.step(&mut p, &zero).unwrap();
        }
        assert_eq!(p, net);
    }

    #[test]
    fn deterministic() {
        let (net, g) = net_and_grads(2);
        let run = || {
            let mut p = net.clone();
            let mut st = AdamState::new(&net, AdamConfig::default());
            for _ in 0..3 {
                st.step(&mut p, &g).unwrap();
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scalar_adam_first_step() {
        let mut x = 1.0;
        let mut opt = ScalarAdam::new(AdamConfig::default());
        opt.step(&mut x, -5.0);
        assert!((x - (1.0 + 3e-4)).abs() < 3e-6);
    }
}
