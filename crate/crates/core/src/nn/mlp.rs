use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Linear, ParamLayout};

/// Fully connected network with tanh hidden activations and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Inputs of every layer and post-activation hidden values.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// `dims` lists the input width, hidden widths and output width.
    pub fn new(layout: &mut ParamLayout, name: &str, dims: &[usize]) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(layout, &format!("{name}.{i}"), w[0], w[1]))
            .collect();
        Self { layers }
    }

    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        for l in &self.layers {
            l.init(params, rng);
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty mlp").out_dim
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = l.forward_vec(p, &cur);
            if i < last {
                for v in &mut y {
                    *v = v.tanh();
                }
            }
            inputs.push(std::mem::replace(&mut cur, y));
        }
        (cur, MlpCache { inputs })
    }

    /// Accumulates parameter gradients if `grad` is given and returns the
    /// input gradient.
    pub fn backward(&self, p: &[f64], cache: &MlpCache, dy: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let mut d = dy.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let mut dx = vec![0.0; l.in_dim];
            l.backward(p, x, &d, grad.as_deref_mut(), Some(&mut dx));
            if i > 0 {
                // x is the tanh output of the previous layer
                for (g, a) in dx.iter_mut().zip(x) {
                    *g *= 1.0 - a * a;
                }
            }
            d = dx;
        }
        d
    }
}
