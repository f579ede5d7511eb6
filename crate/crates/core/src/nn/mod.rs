//! Small dense networks with hand-written reverse-mode gradients.
//!
//! Parameters of a model live in one flat `Vec<f64>`; layers hold offsets
//! into it. Forward passes return caches that the matching backward pass
//! consumes, accumulating into a gradient buffer of the same layout.

mod adam;
mod gru;
mod linear;
mod mlp;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use gru::{Gru, GruCache};
pub use linear::Linear;
pub use mlp::{Mlp, MlpCache};

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named layout of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamLayout {
    pub entries: Vec<(String, usize, usize)>,
    len: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves `size` parameters under `name` and returns their offset.
    pub fn alloc(&mut self, name: impl Into<String>, size: usize) -> usize {
        let off = self.len;
        self.entries.push((name.into(), off, size));
        self.len += size;
        off
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|&(_, off, size)| off..off + size)
    }
}

/// Fills `params[range]` with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn init_uniform(params: &mut [f64], range: Range<usize>, fan_in: usize, rng: &mut ChaCha8Rng) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for p in &mut params[range] {
        *p = rng.random_range(-bound..bound);
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `y = W x` for row-major `W` of shape `rows x x.len()`, accumulated into `y`.
#[inline]
pub(crate) fn matvec_acc(w: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (yi, row) in y.iter_mut().zip(w.chunks_exact(cols)) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *yi += acc;
    }
}

/// `dx += W^T dy`.
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (g, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if *g == 0.0 {
            continue;
        }
        for (d, a) in dx.iter_mut().zip(row) {
            *d += g * a;
        }
    }
}

/// `dW += dy x^T`.
#[inline]
pub(crate) fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (g, row) in dy.iter().zip(dw.chunks_exact_mut(cols)) {
        if *g == 0.0 {
            continue;
        }
        for (d, a) in row.iter_mut().zip(x) {
            *d += g * a;
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets_are_contiguous() {
        let mut l = ParamLayout::new();
        assert_eq!(l.alloc("a", 3), 0);
        assert_eq!(l.alloc("b", 5), 3);
        assert_eq!(l.len(), 8);
        assert_eq!(l.range("b"), Some(3..8));
        assert_eq!(l.range("c"), None);
    }

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
    }
}
