//! Dense ReLU networks with exact reverse-mode gradients and an Adam optimizer.
//!
//! Weights are stored row-major `out × in`. Batched passes use `dgemm` from
//! `matrixmultiply`; single-sample passes use plain loops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        Self { input_dim, output_dim, hidden: hidden.to_vec() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Shape(format!("invalid network spec {self:?}")));
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden);
        d.push(self.output_dim);
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim × in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }
}

/// Network parameters. Hidden layers use ReLU, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Same shapes as [`Mlp`]; holds ∂L/∂θ.
pub type Gradients = Mlp;

/// Per-layer activations of a single forward pass.
///
/// `acts[0]` is the input, `acts[l + 1]` the output of layer `l` (after ReLU
/// for hidden layers). The ReLU mask is recovered from the stored outputs.
#[derive(Debug, Clone)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
}

/// Activations of a batched forward pass, each `n × dim` row-major.
#[derive(Debug, Clone)]
pub struct BatchCache {
    pub n: usize,
    acts: Vec<Vec<f64>>,
}

impl BatchCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds input and output")
    }
}

/// C = A·B + beta·C with explicit strides (row stride, column stride).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert_eq!(c.len(), m * n);
    // SAFETY: the asserts above bound every index touched by dgemm.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// Uniform fan-in initialization (bound `sqrt(1/fan_in)`), zero biases.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(spec, &mut rng)
    }

    pub fn init_with_rng(spec: &MlpSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims();
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = (1.0 / w[0] as f64).sqrt();
                let mut layer = Layer::zeros(w[0], w[1]);
                for v in &mut layer.weight {
                    *v = rng.gen_range(-bound..bound);
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    /// Zero-filled parameters (or gradients) with the shapes of `spec`.
    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims();
        Ok(Self { layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() })
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Layer::zeros(l.in_dim, l.out_dim)).collect() }
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
            hidden: self.layers[..self.layers.len() - 1].iter().map(|l| l.out_dim).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    /// Structural consistency check used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Shape(format!("layer {i} buffers do not match {}x{}", l.out_dim, l.in_dim)));
            }
            if i > 0 && self.layers[i - 1].out_dim != l.in_dim {
                return Err(Error::Shape(format!("layer {i} input {} != previous output", l.in_dim)));
            }
        }
        Ok(())
    }

    /// Visits every parameter in a fixed order (layer, weights then biases).
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Cache)> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("input length {} != {}", x.len(), self.input_dim())));
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (li, l) in self.layers.iter().enumerate() {
            let input = acts.last().expect("non-empty");
            let mut out = l.bias.clone();
            for (o, row) in out.iter_mut().zip(l.weight.chunks_exact(l.in_dim)) {
                *o += row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>();
                if li != last {
                    *o = o.max(0.0);
                }
            }
            acts.push(out);
        }
        let y = acts.last().expect("non-empty").clone();
        Ok((y, Cache { acts }))
    }

    /// Output only; skips building a cache.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    fn check_cache(&self, acts: &[Vec<f64>], n: usize) -> Result<()> {
        let ok = acts.len() == self.layers.len() + 1
            && acts[0].len() == n * self.input_dim()
            && self.layers.iter().zip(&acts[1..]).all(|(l, a)| a.len() == n * l.out_dim);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("activation cache does not match network".into()))
        }
    }

    pub fn backward(&self, cache: &Cache, dl_dy: &[f64]) -> Result<Gradients> {
        Ok(self.backward_with_input(cache, dl_dy)?.0)
    }

    /// Parameter gradients plus ∂L/∂x.
    pub fn backward_with_input(&self, cache: &Cache, dl_dy: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        self.check_cache(&cache.acts, 1)?;
        if dl_dy.len() != self.output_dim() {
            return Err(Error::Shape(format!("dL/dy length {} != {}", dl_dy.len(), self.output_dim())));
        }
        let mut grads = self.zeros_like();
        let mut delta = dl_dy.to_vec();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input = &cache.acts[li];
            let g = &mut grads.layers[li];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] = *d;
                for (gw, x) in g.weight[o * l.in_dim..(o + 1) * l.in_dim].iter_mut().zip(input) {
                    *gw = d * x;
                }
            }
            let mut prev = vec![0.0; l.in_dim];
            for (o, d) in delta.iter().enumerate() {
                for (p, w) in prev.iter_mut().zip(&l.weight[o * l.in_dim..(o + 1) * l.in_dim]) {
                    *p += d * w;
                }
            }
            if li > 0 {
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    /// Forward pass over `n` row-major samples.
    pub fn forward_batch(&self, x: &[f64], n: usize) -> Result<BatchCache> {
        if x.len() != n * self.input_dim() {
            return Err(Error::Shape(format!(
                "batch input length {} != {n} x {}",
                x.len(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (li, l) in self.layers.iter().enumerate() {
            let input = acts.last().expect("non-empty");
            let mut out = Vec::with_capacity(n * l.out_dim);
            for _ in 0..n {
                out.extend_from_slice(&l.bias);
            }
            // out (n×o) += X (n×i) · Wᵀ (i×o)
            gemm(n, l.in_dim, l.out_dim, input, (l.in_dim, 1), &l.weight, (1, l.in_dim), 1.0, &mut out);
            if li != last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        Ok(BatchCache { n, acts })
    }

    /// Batched reverse pass. `dl_dy` is `n × output_dim`; gradients are summed
    /// over the batch. Parameter gradients are skipped when `want_params` is false.
    pub fn backward_batch(
        &self,
        cache: &BatchCache,
        dl_dy: &[f64],
        want_params: bool,
    ) -> Result<(Option<Gradients>, Vec<f64>)> {
        let n = cache.n;
        self.check_cache(&cache.acts, n)?;
        if dl_dy.len() != n * self.output_dim() {
            return Err(Error::Shape("batch dL/dy does not match output".into()));
        }
        let mut grads = want_params.then(|| self.zeros_like());
        let mut delta = dl_dy.to_vec();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input = &cache.acts[li];
            if let Some(g) = grads.as_mut() {
                let g = &mut g.layers[li];
                // dW (o×i) = Δᵀ (o×n) · X (n×i)
                gemm(l.out_dim, n, l.in_dim, &delta, (1, l.out_dim), input, (l.in_dim, 1), 0.0, &mut g.weight);
                for row in delta.chunks_exact(l.out_dim) {
                    for (b, d) in g.bias.iter_mut().zip(row) {
                        *b += d;
                    }
                }
            }
            // dX (n×i) = Δ (n×o) · W (o×i)
            let mut prev = vec![0.0; n * l.in_dim];
            gemm(n, l.out_dim, l.in_dim, &delta, (l.out_dim, 1), &l.weight, (l.in_dim, 1), 0.0, &mut prev);
            if li > 0 {
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok((grads, delta))
    }
}

/// θ' ← (1 − τ)·θ' + τ·θ
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::Shape("target and online networks differ".into()));
    }
    for (t, o) in target.params_mut().zip(online.params()) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive-moment optimizer state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Mlp,
    pub v: Mlp,
}

impl Adam {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self { config, step: 0, m: net.zeros_like(), v: net.zeros_like() }
    }

    /// One bias-corrected Adam update of `net` from `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !net.same_shape(grads) || !net.same_shape(&self.m) {
            return Err(Error::Shape("optimizer, parameters and gradients differ in shape".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let it = net.params_mut().zip(grads.params()).zip(self.m.params_mut().zip(self.v.params_mut()));
        for ((p, g), (m, v)) in it {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Adam on a single scalar (the entropy temperature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: f64,
    pub v: f64,
}

impl ScalarAdam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: 0.0, v: 0.0 }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.m = beta1 * self.m + (1.0 - beta1) * grad;
        self.v = beta2 * self.v + (1.0 - beta2) * grad * grad;
        let m_hat = self.m / (1.0 - beta1.powi(self.step as i32));
        let v_hat = self.v / (1.0 - beta2.powi(self.step as i32));
        *param -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_expected_shapes() {
        let spec = MlpSpec::new(9, &[64, 64], 18);
        let a = Mlp::init(&spec, 5).unwrap();
        let b = Mlp::init(&spec, 5).unwrap();
        assert_eq!(a, b);
        let shapes: Vec<_> = a.layers.iter().map(|l| (l.out_dim, l.in_dim)).collect();
        assert_eq!(shapes, vec![(64, 9), (64, 64), (18, 64)]);
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        let bound = (1.0f64 / 9.0).sqrt();
        assert!(a.layers[0].weight.iter().all(|w| w.abs() <= bound));
        assert_eq!(a.spec(), spec);
        assert_ne!(a, Mlp::init(&spec, 6).unwrap());
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(Mlp::init(&MlpSpec::new(0, &[4], 1), 0).is_err());
        assert!(Mlp::init(&MlpSpec::new(3, &[], 1), 0).is_err());
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = Mlp::zeros(&MlpSpec::new(3, &[4], 2)).unwrap();
        net.layers[1].bias = vec![0.25, -1.5];
        assert_eq!(net.predict(&[1.0, -7.0, 3.0]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn single_linear_layer() {
        let net = Mlp {
            layers: vec![Layer { in_dim: 2, out_dim: 1, weight: vec![1.0, 2.0], bias: vec![0.5] }],
        };
        assert_eq!(net.predict(&[3.0, 4.0]).unwrap(), vec![11.5]);
        // dL/dW = dLdy ⊗ x
        let (_, cache) = net.forward(&[3.0, 4.0]).unwrap();
        let (g, dx) = net.backward_with_input(&cache, &[2.0]).unwrap();
        assert_eq!(g.layers[0].weight, vec![6.0, 8.0]);
        assert_eq!(g.layers[0].bias, vec![2.0]);
        assert_eq!(dx, vec![2.0, 4.0]);
    }

    #[test]
    fn relu_blocks_negative_unit() {
        let net = Mlp {
            layers: vec![
                Layer { in_dim: 1, out_dim: 2, weight: vec![1.0, -1.0], bias: vec![0.0, 0.0] },
                Layer { in_dim: 2, out_dim: 1, weight: vec![1.0, 10.0], bias: vec![0.0] },
            ],
        };
        assert_eq!(net.predict(&[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero() {
        let net = Mlp::init(&MlpSpec::new(4, &[8, 8], 3), 1).unwrap();
        let (_, cache) = net.forward(&[0.1, -0.2, 0.3, 0.4]).unwrap();
        let g = net.backward(&cache, &[0.0; 3]).unwrap();
        assert!(g.params().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = Mlp::init(&MlpSpec::new(4, &[8], 3), 1).unwrap();
        assert!(matches!(net.forward(&[1.0; 5]), Err(Error::Shape(_))));
        let (_, cache) = net.forward(&[1.0; 4]).unwrap();
        assert!(matches!(net.backward(&cache, &[1.0; 2]), Err(Error::Shape(_))));
        let other = Mlp::init(&MlpSpec::new(4, &[6], 3), 1).unwrap();
        assert!(matches!(other.backward(&cache, &[1.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(net.forward_batch(&[1.0; 7], 2), Err(Error::Shape(_))));
        let mut opt = Adam::new(&net, AdamConfig::default());
        let mut p = net.clone();
        assert!(matches!(opt.step(&mut p, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_matches_single_sample_path() {
        let net = Mlp::init(&MlpSpec::new(5, &[7, 6], 3), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let x: Vec<f64> = (0..n * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cache = net.forward_batch(&x, n).unwrap();
        let (g, dx) = net.backward_batch(&cache, &dy, true).unwrap();
        let g = g.unwrap();
        let mut sum = net.zeros_like();
        for i in 0..n {
            let (y, c) = net.forward(&x[i * 5..(i + 1) * 5]).unwrap();
            for (a, b) in y.iter().zip(&cache.output()[i * 3..(i + 1) * 3]) {
                assert!((a - b).abs() < 1e-12);
            }
            let (gi, dxi) = net.backward_with_input(&c, &dy[i * 3..(i + 1) * 3]).unwrap();
            for (s, v) in sum.params_mut().zip(gi.params()) {
                *s += v;
            }
            for (a, b) in dxi.iter().zip(&dx[i * 5..(i + 1) * 5]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        for (a, b) in sum.params().zip(g.params()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let net = Mlp::init(&MlpSpec::new(3, &[4], 2), 1).unwrap();
        let mut p = net.clone();
        let mut opt = Adam::new(&net, AdamConfig::default());
        opt.step(&mut p, &net.zeros_like()).unwrap();
        assert_eq!(p, net);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn adam_first_step_closed_form() {
        // With fresh moments, m̂ = g and v̂ = g², so Δθ = −lr·g/(|g| + ε).
        let net = Mlp::init(&MlpSpec::new(3, &[4], 2), 2).unwrap();
        let mut g = net.zeros_like();
        for (i, v) in g.params_mut().enumerate() {
            *v = (i as f64 - 10.0) * 0.37;
        }
        let lr = 1e-3;
        let cfg = AdamConfig::with_lr(lr);
        let mut p = net.clone();
        let mut opt = Adam::new(&net, cfg);
        opt.step(&mut p, &g).unwrap();
        for ((new, old), gi) in p.params().zip(net.params()).zip(g.params()) {
            let expected = old - lr * gi / (gi.abs() + cfg.eps);
            assert!((new - expected).abs() < 1e-15, "{new} vs {expected}");
        }
        // Not idempotent: the second identical call sees an advanced step counter.
        let mut p2 = p.clone();
        opt.step(&mut p2, &g).unwrap();
        assert_eq!(opt.step, 2);
        assert_ne!(p2, p);
    }

    #[test]
    fn polyak_blend() {
        let a = Mlp::init(&MlpSpec::new(2, &[3], 1), 1).unwrap();
        let b = Mlp::init(&MlpSpec::new(2, &[3], 1), 2).unwrap();
        let mut t = a.clone();
        polyak_update(&mut t, &b, 0.25).unwrap();
        for ((tv, av), bv) in t.params().zip(a.params()).zip(b.params()) {
            assert!((tv - (0.75 * av + 0.25 * bv)).abs() < 1e-15);
        }
    }

    #[test]
    fn loss_descends_on_quadratic() {
        // Fit a fixed target with squared error; after warm-in the loss keeps falling.
        let spec = MlpSpec::new(2, &[16], 1);
        let mut net = Mlp::init(&spec, 4).unwrap();
        let mut opt = Adam::new(&net, AdamConfig::with_lr(1e-3));
        let xs = [[0.5, -0.3], [0.1, 0.9], [-0.7, 0.2], [0.3, 0.3]];
        let ys = [1.0, -0.5, 0.25, 0.75];
        let loss = |net: &Mlp| -> f64 {
            xs.iter().zip(ys).map(|(x, y)| (net.predict(x).unwrap()[0] - y).powi(2)).sum::<f64>() / 4.0
        };
        let mut prev = f64::INFINITY;
        for step in 0..200 {
            let mut g = net.zeros_like();
            for (x, y) in xs.iter().zip(ys) {
                let (out, c) = net.forward(x).unwrap();
                let gi = net.backward(&c, &[0.5 * (out[0] - y)]).unwrap();
                for (s, v) in g.params_mut().zip(gi.params()) {
                    *s += v;
                }
            }
            opt.step(&mut net, &g).unwrap();
            let l = loss(&net);
            if step >= 10 {
                assert!(l < prev, "loss rose at step {step}: {prev} -> {l}");
            }
            prev = l;
        }
    }
}
