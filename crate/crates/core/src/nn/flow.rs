//! Invertible flow density estimator: a stack of affine coupling layers with
//! small conditioner MLPs over a standard-normal base. Log-determinants are
//! analytic and the inverse is exact.

use rand::Rng;

use super::{Activation, Mlp, Params, Tensor1};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// One affine coupling layer: the pass half conditions a scale/shift applied
/// to the other half. The scale is tanh-capped to keep log-determinants
/// bounded during training.
#[derive(Debug, Clone)]
struct Coupling {
    cond: Mlp,
    swap: bool,
    scale_cap: f64,
    // training caches
    cached_pass: Vec<f64>,
    cached_trans: Vec<f64>,
    cached_s: Vec<f64>,
    cached_exp_s: Vec<f64>,
}

impl Coupling {
    fn new(dim: usize, hidden: usize, swap: bool, rng: &mut impl Rng) -> Self {
        let half = dim / 2;
        let trans_len = dim - half;
        let mut cond = Mlp::new(&[half, hidden, 2 * trans_len], Activation::Tanh, false, rng);
        // scale/shift head starts at zero so the coupling is the identity
        cond.zero_final_layer();
        Coupling {
            cond,
            swap,
            scale_cap: 5.0,
            cached_pass: Vec::new(),
            cached_trans: Vec::new(),
            cached_s: Vec::new(),
            cached_exp_s: Vec::new(),
        }
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        let half = x.len() / 2;
        if self.swap {
            (&x[half..], &x[..half])
        } else {
            (&x[..half], &x[half..])
        }
    }

    fn join(&self, pass: &[f64], trans: &[f64]) -> Vec<f64> {
        if self.swap {
            trans.iter().chain(pass).copied().collect()
        } else {
            pass.iter().chain(trans).copied().collect()
        }
    }

    fn scale(&self, s_raw: f64) -> f64 {
        self.scale_cap * (s_raw / self.scale_cap).tanh()
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let (pass, trans) = self.split(x);
        let cond_out = self.cond.forward(pass).expect("coupling width");
        let n = trans.len();
        let mut y_trans = vec![0.0; n];
        let mut log_det = 0.0;
        for j in 0..n {
            let s = self.scale(cond_out[j]);
            log_det += s;
            y_trans[j] = trans[j] * s.exp() + cond_out[n + j];
        }
        (self.join(pass, &y_trans), log_det)
    }

    fn inverse(&self, y: &[f64]) -> Vec<f64> {
        let (pass, y_trans) = self.split(y);
        let cond_out = self.cond.forward(pass).expect("coupling width");
        let n = y_trans.len();
        let mut trans = vec![0.0; n];
        for j in 0..n {
            let s = self.scale(cond_out[j]);
            trans[j] = (y_trans[j] - cond_out[n + j]) * (-s).exp();
        }
        self.join(pass, &trans)
    }

    fn forward_train(&mut self, x: &[f64]) -> (Vec<f64>, f64) {
        let (pass, trans) = self.split(x);
        self.cached_pass = pass.to_vec();
        self.cached_trans = trans.to_vec();
        let cond_out = self.cond.forward_train(&self.cached_pass).expect("coupling width");
        let n = trans.len();
        self.cached_s.clear();
        self.cached_exp_s.clear();
        let mut y_trans = vec![0.0; n];
        let mut log_det = 0.0;
        for j in 0..n {
            let s = self.scale(cond_out[j]);
            let es = s.exp();
            self.cached_s.push(s);
            self.cached_exp_s.push(es);
            log_det += s;
            y_trans[j] = self.cached_trans[j] * es + cond_out[n + j];
        }
        (self.join(&self.cached_pass, &y_trans), log_det)
    }

    /// Backward given the gradient w.r.t. this layer's output and the shared
    /// gradient w.r.t. the accumulated log-determinant.
    fn backward(&mut self, g_y: &[f64], g_log_det: f64) -> Vec<f64> {
        let n = self.cached_trans.len();
        let (g_pass_out, g_trans_out) = self.split(g_y);
        let g_pass_out = g_pass_out.to_vec();
        let g_trans_out = g_trans_out.to_vec();

        let mut g_cond = vec![0.0; 2 * n];
        let mut g_trans_in = vec![0.0; n];
        for j in 0..n {
            let g_s = g_trans_out[j] * self.cached_trans[j] * self.cached_exp_s[j] + g_log_det;
            // d scale / d raw = 1 - (s / cap)^2
            let ratio = self.cached_s[j] / self.scale_cap;
            g_cond[j] = g_s * (1.0 - ratio * ratio);
            g_cond[n + j] = g_trans_out[j];
            g_trans_in[j] = g_trans_out[j] * self.cached_exp_s[j];
        }
        let mut g_pass_in = self.cond.backward(&g_cond);
        for (g, go) in g_pass_in.iter_mut().zip(&g_pass_out) {
            *g += go;
        }
        self.join(&g_pass_in, &g_trans_in)
    }
}

impl Params for Coupling {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor1)) {
        self.cond.visit_params(&format!("{prefix}.cond"), f);
    }
}

/// Normalizing-flow density over `R^dim` with a standard normal base: the
/// log-density at `z` is the base log-density of the transformed point plus
/// the accumulated log-determinant.
#[derive(Debug, Clone)]
pub struct FlowDensity {
    dim: usize,
    couplings: Vec<Coupling>,
    cached_u: Vec<f64>,
}

impl FlowDensity {
    /// Identity-initialized flow: the initial log-density equals the base
    /// standard-normal log-density everywhere.
    pub fn identity_init(dim: usize, n_layers: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        assert!(dim >= 2 && dim % 2 == 0, "flow dim must be even and >= 2");
        let couplings = (0..n_layers)
            .map(|i| Coupling::new(dim, hidden, i % 2 == 1, rng))
            .collect();
        FlowDensity {
            dim,
            couplings,
            cached_u: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Maps `z` through every coupling, returning the base-space point and
    /// the total log-determinant.
    pub fn transform(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let mut cur = z.to_vec();
        let mut log_det = 0.0;
        for c in &self.couplings {
            let (next, ld) = c.forward(&cur);
            cur = next;
            log_det += ld;
        }
        (cur, log_det)
    }

    /// Exact inverse of [`Self::transform`].
    pub fn inverse(&self, u: &[f64]) -> Vec<f64> {
        let mut cur = u.to_vec();
        for c in self.couplings.iter().rev() {
            cur = c.inverse(&cur);
        }
        cur
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::domain(format!(
                "flow expects dim {}, got {}",
                self.dim,
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("flow input must be finite"));
        }
        let (u, log_det) = self.transform(z);
        Ok(base_log_density(&u) + log_det)
    }

    pub fn log_density_train(&mut self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("flow input must be finite with matching dim"));
        }
        let mut cur = z.to_vec();
        let mut log_det = 0.0;
        for c in &mut self.couplings {
            let (next, ld) = c.forward_train(&cur);
            cur = next;
            log_det += ld;
        }
        let lp = base_log_density(&cur) + log_det;
        self.cached_u = cur;
        Ok(lp)
    }

    /// Backward from a scalar gradient on the log-density; accumulates
    /// conditioner gradients and returns d log p / d z.
    pub fn backward(&mut self, g_log_p: f64) -> Vec<f64> {
        // base: d/du [-|u|^2 / 2] = -u
        let mut g = self.cached_u.iter().map(|&u| -u * g_log_p).collect::<Vec<_>>();
        for c in self.couplings.iter_mut().rev() {
            g = c.backward(&g, g_log_p);
        }
        g
    }
}

fn base_log_density(u: &[f64]) -> f64 {
    let sq: f64 = u.iter().map(|v| v * v).sum();
    -0.5 * (u.len() as f64) * LN_2PI - 0.5 * sq
}

impl Params for FlowDensity {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor1)) {
        for (i, c) in self.couplings.iter_mut().enumerate() {
            c.visit_params(&format!("{prefix}.c{i}"), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn perturbed_flow(dim: usize, seed: u64, noise: f64) -> FlowDensity {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flow = FlowDensity::identity_init(dim, 4, 8, &mut rng);
        flow.visit_params("flow", &mut |_, t| {
            for v in &mut t.values {
                *v += rng.gen_range(-noise..noise);
            }
        });
        flow
    }

    #[test]
    fn identity_flow_matches_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flow = FlowDensity::identity_init(2, 4, 8, &mut rng);
        let lp0 = flow.log_density(&[0.0, 0.0]).unwrap();
        assert!((lp0 - (-LN_2PI)).abs() < 1e-12, "log(1/(2pi)) at origin");
        for _ in 0..50 {
            let z: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let expected = base_log_density(&z);
            assert!((flow.log_density(&z).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let flow = perturbed_flow(2, 2, 0.1);
        assert!(flow.log_density(&[f64::NAN, 0.0]).is_err());
        assert!(flow.log_density(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn invertibility_on_random_points() {
        let flow = perturbed_flow(8, 3, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let z: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.5..2.5)).collect();
            let (u, _) = flow.transform(&z);
            let back = flow.inverse(&u);
            for (a, b) in z.iter().zip(&back) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn density_integrates_to_one_by_importance_sampling() {
        let flow = perturbed_flow(2, 5, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // proposal: N(0, 3^2 I)
        let sigma = 3.0f64;
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z: Vec<f64> = (0..2)
                .map(|_| {
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    sigma * (-2.0 * u1.ln()).sqrt() * u2.cos()
                })
                .collect();
            let log_q = -LN_2PI - 2.0 * sigma.ln()
                - 0.5 * z.iter().map(|v| v * v).sum::<f64>() / (sigma * sigma);
            acc += (flow.log_density(&z).unwrap() - log_q).exp();
        }
        let integral = acc / n as f64;
        assert!((integral - 1.0).abs() < 5e-2, "integral = {integral}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut flow = perturbed_flow(4, 7, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

        super::super::zero_grads(&mut flow);
        let _ = flow.log_density_train(&z).unwrap();
        let g_z = flow.backward(1.0);

        let h = 1e-6;
        for i in 0..4 {
            let mut up = z.clone();
            up[i] += h;
            let mut dn = z.clone();
            dn[i] -= h;
            let fd =
                (flow.log_density(&up).unwrap() - flow.log_density(&dn).unwrap()) / (2.0 * h);
            let rel = (fd - g_z[i]).abs() / fd.abs().max(1.0);
            assert!(rel < 1e-4, "z grad {i}: fd={fd} an={}", g_z[i]);
        }

        let mut checks: Vec<(String, usize, f64)> = Vec::new();
        flow.visit_params("flow", &mut |name, t| {
            for i in (0..t.len()).step_by(11) {
                checks.push((name.clone(), i, t.grad[i]));
            }
        });
        for (name, idx, analytic) in checks {
            let mut probe = |delta: f64| {
                flow.visit_params("flow", &mut |n, t| {
                    if n == name {
                        t.values[idx] += delta;
                    }
                });
                let l = flow.log_density(&z).unwrap();
                flow.visit_params("flow", &mut |n, t| {
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
