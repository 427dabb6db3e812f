//! Dense layers and multi-layer perceptrons with hand-rolled reverse-mode
//! gradients, plus softmax/sigmoid heads.

use rand::Rng;

use super::{Params, Tensor1};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the post-activation output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A fully connected layer `y = W x + b` with weight shape `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor1,
    pub bias: Tensor1,
    n_in: usize,
    n_out: usize,
    cached_input: Vec<f64>,
}

impl Linear {
    /// Symmetric uniform fan-in scaling: U(-1/sqrt(in), 1/sqrt(in)).
    pub fn init(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let limit = 1.0 / (n_in as f64).sqrt();
        Linear {
            weight: Tensor1::uniform(&[n_out, n_in], limit, rng),
            bias: Tensor1::zeros(&[n_out]),
            n_in,
            n_out,
            cached_input: Vec::new(),
        }
    }

    pub fn zeroed(n_in: usize, n_out: usize) -> Self {
        Linear {
            weight: Tensor1::zeros(&[n_out, n_in]),
            bias: Tensor1::zeros(&[n_out]),
            n_in,
            n_out,
            cached_input: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.n_in
    }

    pub fn output_dim(&self) -> usize {
        self.n_out
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let mut out = self.bias.values.clone();
        for (o, row) in out.iter_mut().zip(self.weight.values.chunks(self.n_in)) {
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *o += acc;
        }
        out
    }

    /// Forward pass that caches the input for a later [`Self::backward`].
    pub fn forward_train(&mut self, x: &[f64]) -> Vec<f64> {
        self.cached_input.clear();
        self.cached_input.extend_from_slice(x);
        self.forward(x)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, g_out: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g_out.len(), self.n_out);
        debug_assert_eq!(self.cached_input.len(), self.n_in);
        let mut g_in = vec![0.0; self.n_in];
        for (o, g) in g_out.iter().enumerate() {
            self.bias.grad[o] += g;
            let row = &self.weight.values[o * self.n_in..(o + 1) * self.n_in];
            let g_row = &mut self.weight.grad[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                g_row[i] += g * self.cached_input[i];
                g_in[i] += g * row[i];
            }
        }
        g_in
    }
}

impl Params for Linear {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor1)) {
        f(format!("{prefix}.w"), &mut self.weight);
        f(format!("{prefix}.b"), &mut self.bias);
    }
}

/// A stack of [`Linear`] layers with a shared activation; the final layer is
/// linear unless `activate_last` is set.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub act: Activation,
    pub activate_last: bool,
    cached_outputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// `widths` lists every layer width including the input, e.g.
    /// `[50, 64, 32]` builds two dense layers.
    pub fn new(widths: &[usize], act: Activation, activate_last: bool, rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2, "mlp needs at least one layer");
        assert!(widths.iter().all(|&w| w >= 1), "widths must be >= 1");
        let layers = widths
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], rng))
            .collect();
        Mlp {
            layers,
            act,
            activate_last,
            cached_outputs: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().expect("nonempty mlp").input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty mlp").output_dim()
    }

    /// Zeroes the final layer so the stack initially outputs zeros; used for
    /// identity-initialized flow conditioners.
    pub fn zero_final_layer(&mut self) {
        let last = self.layers.last_mut().expect("nonempty mlp");
        last.weight.values.iter_mut().for_each(|w| *w = 0.0);
        last.bias.values.iter_mut().for_each(|b| *b = 0.0);
    }

    fn activates(&self, layer_idx: usize) -> bool {
        layer_idx + 1 < self.layers.len() || self.activate_last
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::domain(format!(
                "mlp expects input width {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.forward(&cur);
            if self.activates(i) {
                cur.iter_mut().for_each(|v| *v = self.act.apply(*v));
            }
        }
        Ok(cur)
    }

    pub fn forward_train(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::domain(format!(
                "mlp expects input width {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        self.cached_outputs.clear();
        let mut cur = x.to_vec();
        let act = self.act;
        let n_layers = self.layers.len();
        let activate_last = self.activate_last;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            cur = layer.forward_train(&cur);
            if i + 1 < n_layers || activate_last {
                cur.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            self.cached_outputs.push(cur.clone());
        }
        Ok(cur)
    }

    /// Backward through the whole stack; requires a prior `forward_train`.
    pub fn backward(&mut self, g_out: &[f64]) -> Vec<f64> {
        let mut g = g_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            if self.activates(i) {
                let y = &self.cached_outputs[i];
                for (gv, &yv) in g.iter_mut().zip(y) {
                    *gv *= self.act.grad_from_output(yv);
                }
            }
            g = self.layers[i].backward(&g);
        }
        g
    }
}

impl Params for Mlp {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor1)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&format!("{prefix}.l{i}"), f);
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Gradient of the loss w.r.t. logits given softmax output `p` and upstream
/// gradient `g_p`: `p .* (g_p - <g_p, p>)`.
pub fn softmax_backward(p: &[f64], g_p: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(g_p).map(|(a, b)| a * b).sum();
    p.iter().zip(g_p).map(|(&pi, &gi)| pi * (gi - dot)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero_through_tanh() {
        let mut net = Mlp::new(&[3, 4, 2], Activation::Tanh, false, &mut ChaCha8Rng::seed_from_u64(0));
        for layer in &mut net.layers {
            layer.weight.values.iter_mut().for_each(|w| *w = 0.0);
        }
        let out = net.forward(&[0.3, -0.7, 0.1]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = Linear::zeroed(3, 3);
        for i in 0..3 {
            layer.weight.values[i * 3 + i] = 1.0;
        }
        let x = [0.5, -1.25, 2.0];
        assert_eq!(layer.forward(&x), x.to_vec());
    }

    #[test]
    fn width_mismatch_is_a_domain_error() {
        let net = Mlp::new(&[3, 2], Activation::Tanh, false, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn deterministic_init_per_seed() {
        let a = Mlp::new(&[5, 8, 3], Activation::Tanh, false, &mut ChaCha8Rng::seed_from_u64(42));
        let b = Mlp::new(&[5, 8, 3], Activation::Tanh, false, &mut ChaCha8Rng::seed_from_u64(42));
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.weight.values, lb.weight.values);
        }
    }

    /// Scalar loss for gradient checking: sum of squared outputs.
    fn loss_of(net: &Mlp, x: &[f64]) -> f64 {
        net.forward(x).unwrap().iter().map(|v| v * v).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (seed, act) in [(1u64, Activation::Tanh), (2, Activation::Relu)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = Mlp::new(&[4, 6, 8, 3], act, false, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

            super::super::zero_grads(&mut net);
            let out = net.forward_train(&x).unwrap();
            let g_out: Vec<f64> = out.iter().map(|v| 2.0 * v).collect();
            let g_in = net.backward(&g_out);

            // input gradient
            let h = 1e-5;
            for i in 0..x.len() {
                let mut up = x.clone();
                up[i] += h;
                let mut dn = x.clone();
                dn[i] -= h;
                let fd = (loss_of(&net, &up) - loss_of(&net, &dn)) / (2.0 * h);
                let rel = (fd - g_in[i]).abs() / fd.abs().max(1.0);
                assert!(rel < 1e-4, "input grad {i}: fd={fd} an={}", g_in[i]);
            }

            // parameter gradients
            let mut checks: Vec<(String, usize, f64)> = Vec::new();
            net.visit_params("net", &mut |name, t| {
                for i in (0..t.len()).step_by(7) {
                    checks.push((name.clone(), i, t.grad[i]));
                }
            });
            for (name, idx, analytic) in checks {
                let mut probe = |delta: f64| {
                    net.visit_params("net", &mut |n, t| {
                        if n == name {
                            t.values[idx] += delta;
                        }
                    });
                    let l = loss_of(&net, &x);
                    net.visit_params("net", &mut |n, t| {
                        if n == name {
                            t.values[idx] -= delta;
                        }
                    });
                    l
                };
                let fd = (probe(h) - probe(-h)) / (2.0 * h);
                let rel = (fd - analytic).abs() / fd.abs().max(1.0);
                assert!(rel < 1e-4, "{name}[{idx}]: fd={fd} an={analytic}");
            }
        }
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let target: Vec<f64> = {
            let raw: Vec<f64> = (0..6).map(|_| rng.gen_range(0.1..1.0)).collect();
            let t: f64 = raw.iter().sum();
            raw.iter().map(|x| x / t).collect()
        };
        // loss = sum (softmax - target)^2
        let loss = |l: &[f64]| -> f64 {
            softmax(l)
                .iter()
                .zip(&target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum()
        };
        let p = softmax(&logits);
        let g_p: Vec<f64> = p.iter().zip(&target).map(|(pi, t)| 2.0 * (pi - t)).collect();
        let g_logits = softmax_backward(&p, &g_p);
        let h = 1e-6;
        for i in 0..6 {
            let mut up = logits.clone();
            up[i] += h;
            let mut dn = logits.clone();
            dn[i] -= h;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
            assert!((fd - g_logits[i]).abs() < 1e-6, "i={i}");
        }
    }
}
