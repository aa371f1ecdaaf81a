use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{flush_subnormal, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the activated output `h`.
    fn backprop(self, grad: &mut Array2<f64>, h: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(h).for_each(|g, &h| {
                if h <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(grad).and(h).for_each(|g, &h| *g *= 1.0 - h * h),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

/// Affine layer computing `x·W + b`, with `W` shaped `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.ncols()
    }
}

/// Fully connected network: hidden layers share one activation, the output is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Gradients shaped exactly like the network they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

/// Activations kept by `Mlp::forward` for the backward pass: the input of every layer.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Layer sizes `[in, h1, ..., out]`, weights and biases drawn from
    /// `U(-1/√fan_in, 1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|io| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                let mut d = Dense::zeros(io[0], io[1]);
                d.w.mapv_inplace(|_| rng.random_range(-bound..bound));
                d.b.mapv_inplace(|_| rng.random_range(-bound..bound));
                d
            })
            .collect();
        Self { layers, activation }
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Shape("network has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.b.len() != l.out_dim() {
                return Err(NnError::Shape(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), NnError> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w) + &layer.b;
            if i != last {
                self.activation.apply(&mut z);
            }
            inputs.push(h);
            h = z;
        }
        Ok((h, ForwardCache { inputs }))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut h = x.dot(&self.layers[0].w) + &self.layers[0].b;
        if last > 0 {
            self.activation.apply(&mut h);
        }
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            h = h.dot(&layer.w) + &layer.b;
            if i != last {
                self.activation.apply(&mut h);
            }
        }
        Ok(h)
    }

    /// Reverse-mode pass: parameter gradients and the gradient w.r.t. the input.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = d_out.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let dw = input.t().dot(&g);
            let db = g.sum_axis(Axis(0));
            let mut d_in = g.dot(&layer.w.t());
            if i > 0 {
                self.activation.backprop(&mut d_in, input);
            }
            grads.push(Dense { w: dw, b: db });
            g = d_in;
        }
        grads.reverse();
        (Gradients { layers: grads }, g)
    }

    /// `Σ W²` over weight matrices only (biases are not regularized).
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers.iter().map(|l| l.w.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    /// Adds the gradient of `coef · Σ W²` to `grads`.
    pub fn add_l2_grad(&self, grads: &mut Gradients, coef: f64) {
        if coef == 0.0 {
            return;
        }
        for (g, l) in grads.layers.iter_mut().zip(&self.layers) {
            g.w.scaled_add(2.0 * coef, &l.w);
        }
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.w.dim() == b.w.dim() && a.b.len() == b.b.len())
    }

    /// `self ← tau·source + (1 − tau)·self`.
    pub fn polyak_update(&mut self, source: &Mlp, tau: f64) -> Result<(), NnError> {
        if !self.same_shape(source) {
            return Err(NnError::Shape("polyak update between different shapes".into()));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(NnError::Shape(format!("tau {tau} outside [0, 1]")));
        }
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut t.w)
                .and(&s.w)
                .for_each(|t, &s| {
                    *t = tau * s + (1.0 - tau) * *t;
                    flush_subnormal(t);
                });
            Zip::from(&mut t.b).and(&s.b).for_each(|t, &s| {
                *t = tau * s + (1.0 - tau) * *t;
                flush_subnormal(t);
            });
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters in a fixed order (per layer: weights row-major, then biases).
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }
}

impl Gradients {
    /// Same ordering as `Mlp::params`.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| *v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, s};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_weights_output_last_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[3, 5, 2], Activation::Relu, &mut rng);
        for l in &mut net.layers {
            l.w.fill(0.0);
        }
        net.layers[1].b = array![0.7, -0.2];
        let (out, _) = net.forward(random_input(4, 3, &mut rng).view()).unwrap();
        for row in out.rows() {
            assert_eq!(row.to_vec(), vec![0.7, -0.2]);
        }
    }

    #[test]
    fn identity_linear_layer() {
        let net = Mlp::from_layers(
            vec![Dense {
                w: Array2::eye(3),
                b: Array1::zeros(3),
            }],
            Activation::Tanh,
        )
        .unwrap();
        let x = array![[1.0, -2.0, 3.5]];
        assert_eq!(net.forward(x.view()).unwrap().0, x);
    }

    #[test]
    fn batching_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 8, 8, 3], Activation::Relu, &mut rng);
        let x = random_input(2, 4, &mut rng);
        let both = net.predict(x.view()).unwrap();
        for r in 0..2 {
            let one = net.predict(x.slice(s![r..r + 1, ..])).unwrap();
            for c in 0..3 {
                assert!((one[[0, c]] - both[[r, c]]).abs() < 1e-14);
            }
        }
        assert_eq!(both, net.forward(x.view()).unwrap().0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 8, 3], Activation::Relu, &mut rng);
        assert!(net.forward(Array2::zeros((2, 5)).view()).is_err());
        let bad = vec![Dense::zeros(3, 4), Dense::zeros(5, 1)];
        assert!(Mlp::from_layers(bad, Activation::Relu).is_err());
    }

    #[test]
    fn sum_of_outputs_gives_unit_last_bias_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[3, 6, 4], Activation::Tanh, &mut rng);
        let x = random_input(1, 3, &mut rng);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (g, _) = net.backward(&cache, Array2::ones((1, 4)).view());
        assert!(g.layers[1].b.iter().all(|v| *v == 1.0));
        let (zero, d_in) = net.backward(&cache, Array2::zeros((1, 4)).view());
        assert!(zero.is_zero());
        assert!(d_in.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Loss = Σ c ⊙ f(x) for a fixed random c.
        for (seed, act) in [(3u64, Activation::Tanh), (4, Activation::Relu)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Mlp::new(&[5, 7, 6, 3], act, &mut rng);
            let x = random_input(4, 5, &mut rng);
            let c = random_input(4, 3, &mut rng);
            let loss = |n: &Mlp, x: &Array2<f64>| (n.predict(x.view()).unwrap() * &c).sum();
            let (_, cache) = net.forward(x.view()).unwrap();
            let (g, d_in) = net.backward(&cache, c.view());
            let h = 1e-6;
            let analytic: Vec<f64> = g.values().cloned().collect();
            let mut probe = net.clone();
            for (k, a) in analytic.iter().enumerate() {
                let orig = *probe.params().nth(k).unwrap();
                *probe.params_mut().nth(k).unwrap() = orig + h;
                let lp = loss(&probe, &x);
                *probe.params_mut().nth(k).unwrap() = orig - h;
                let lm = loss(&probe, &x);
                *probe.params_mut().nth(k).unwrap() = orig;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-6);
                assert!(rel < 1e-4, "param {k}: fd {fd} analytic {a}");
            }
            for idx in [(0, 0), (2, 4), (3, 1)] {
                let mut xp = x.clone();
                xp[idx] += h;
                let mut xm = x.clone();
                xm[idx] -= h;
                let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
                assert!((fd - d_in[idx]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn polyak_extremes_and_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = Mlp::new(&[3, 4, 2], Activation::Relu, &mut rng);
        let tgt = Mlp::new(&[3, 4, 2], Activation::Relu, &mut rng);
        let mut t1 = tgt.clone();
        t1.polyak_update(&src, 1.0).unwrap();
        assert_eq!(t1, src);
        let mut t0 = tgt.clone();
        t0.polyak_update(&src, 0.0).unwrap();
        assert_eq!(t0, tgt);
        let mut half = tgt.clone();
        half.polyak_update(&src, 0.3).unwrap();
        for ((n, o), s) in half.params().zip(tgt.params()).zip(src.params()) {
            assert!(((n - s).abs() - 0.7 * (o - s).abs()).abs() < 1e-12);
        }
        let other = Mlp::new(&[3, 5, 2], Activation::Relu, &mut rng);
        assert!(half.polyak_update(&other, 0.5).is_err());
    }

    #[test]
    fn polyak_scalar_midpoint() {
        let mk = |v: f64| {
            Mlp::from_layers(
                vec![Dense {
                    w: array![[v]],
                    b: array![v],
                }],
                Activation::Relu,
            )
            .unwrap()
        };
        let mut t = mk(0.0);
        t.polyak_update(&mk(2.0), 0.5).unwrap();
        assert_eq!(t, mk(1.0));
    }
}
