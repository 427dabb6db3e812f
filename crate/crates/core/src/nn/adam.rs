//! Adam optimizer with bias correction and global-norm gradient clipping.

use std::collections::BTreeMap;

use super::Params;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state keyed by parameter tensor name; tensors may be registered
/// lazily on the first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One standard Adam update over every parameter tensor.
    pub fn step<P: Params + ?Sized>(&mut self, net: &mut P) {
        self.t += 1;
        let t = self.t as i32;
        let cfg = self.cfg;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let m_map = &mut self.m;
        let v_map = &mut self.v;
        net.visit_params("", &mut |name, tensor| {
            let m = m_map.entry(name.clone()).or_insert_with(|| vec![0.0; tensor.len()]);
            let v = v_map.entry(name).or_insert_with(|| vec![0.0; tensor.len()]);
            for i in 0..tensor.len() {
                let g = tensor.grad[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                tensor.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        });
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`;
/// returns the pre-clip norm.
pub fn clip_global_norm<P: Params + ?Sized>(net: &mut P, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    net.visit_params("", &mut |_, t| {
        for g in &t.grad {
            sq += g * g;
        }
    });
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        net.visit_params("", &mut |_, t| {
            for g in &mut t.grad {
                *g *= scale;
            }
        });
    }
    norm
}
