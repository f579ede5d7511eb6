use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{init_uniform, matvec_acc, matvec_t_acc, outer_acc, ParamLayout};

/// `y = W x + b`, with `W` stored row-major at `w` and `b` at `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = layout.alloc(format!("{name}.weight"), in_dim * out_dim);
        let b = layout.alloc(format!("{name}.bias"), out_dim);
        Self {
            in_dim,
            out_dim,
            w,
            b,
        }
    }

    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        init_uniform(params, self.w..self.w + self.in_dim * self.out_dim, self.in_dim, rng);
        init_uniform(params, self.b..self.b + self.out_dim, self.in_dim, rng);
    }

    fn weight<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.w..self.w + self.in_dim * self.out_dim]
    }

    pub fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        y.copy_from_slice(&p[self.b..self.b + self.out_dim]);
        matvec_acc(self.weight(p), x, y);
    }

    pub fn forward_vec(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.out_dim];
        self.forward(p, x, &mut y);
        y
    }

    /// Accumulates parameter gradients and `dx`, each only if given.
    pub fn backward(
        &self,
        p: &[f64],
        x: &[f64],
        dy: &[f64],
        grad: Option<&mut [f64]>,
        dx: Option<&mut [f64]>,
    ) {
        if let Some(grad) = grad {
            outer_acc(&mut grad[self.w..self.w + self.in_dim * self.out_dim], dy, x);
            for (g, d) in grad[self.b..self.b + self.out_dim].iter_mut().zip(dy) {
                *g += d;
            }
        }
        if let Some(dx) = dx {
            matvec_t_acc(self.weight(p), dy, dx);
        }
    }
}
