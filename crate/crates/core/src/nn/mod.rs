//! Minimal trainable function stack: dense layers with reverse-mode
//! gradients, an affine-coupling flow density with analytic log-determinant,
//! an Adam optimizer, and a bit-exact checkpoint format.
//!
//! Training is single-threaded and deterministic given a seed; inference
//! forward passes are pure over frozen parameters and may run in parallel.

mod adam;
pub mod checkpoint;
mod flow;
mod mlp;

pub use adam::{clip_global_norm, Adam, AdamConfig};
pub use flow::FlowDensity;
pub use mlp::{sigmoid, softmax, softmax_backward, Activation, Linear, Mlp};

/// A parameter tensor with matching gradient storage.
#[derive(Debug, Clone)]
pub struct Tensor1 {
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Tensor1 {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor1 {
            values: vec![0.0; n],
            grad: vec![0.0; n],
            shape: shape.to_vec(),
        }
    }

    /// Symmetric uniform init in (-limit, limit).
    pub fn uniform(shape: &[usize], limit: f64, rng: &mut impl rand::Rng) -> Self {
        let mut t = Self::zeros(shape);
        for v in &mut t.values {
            *v = rng.gen_range(-limit..limit);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Visitor over every named parameter tensor of a trainable component.
///
/// Visit order is deterministic; names are stable across runs and are the
/// keys used by the optimizer state and the checkpoint format.
pub trait Params {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor1));
}

pub fn zero_grads<P: Params + ?Sized>(p: &mut P) {
    p.visit_params("", &mut |_, t| t.zero_grad());
}

/// Total number of scalar parameters.
pub fn param_count<P: Params + ?Sized>(p: &mut P) -> usize {
    let mut n = 0;
    p.visit_params("", &mut |_, t| n += t.len());
    n
}
