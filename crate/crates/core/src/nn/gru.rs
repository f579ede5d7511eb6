use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{init_uniform, matvec_acc, matvec_t_acc, outer_acc, sigmoid, ParamLayout};

/// Gated recurrent unit with reset, update and candidate gates stacked in
/// that order:
///
/// ```text
/// r  = sig(W_ir x + b_ir + W_hr h + b_hr)
/// z  = sig(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub input_dim: usize,
    pub hidden_dim: usize,
    w_ih: usize,
    b_ih: usize,
    w_hh: usize,
    b_hh: usize,
}

/// Values saved by [`Gru::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
}

impl Gru {
    pub fn new(layout: &mut ParamLayout, name: &str, input_dim: usize, hidden_dim: usize) -> Self {
        let g = 3 * hidden_dim;
        Self {
            input_dim,
            hidden_dim,
            w_ih: layout.alloc(format!("{name}.weight_ih"), g * input_dim),
            b_ih: layout.alloc(format!("{name}.bias_ih"), g),
            w_hh: layout.alloc(format!("{name}.weight_hh"), g * hidden_dim),
            b_hh: layout.alloc(format!("{name}.bias_hh"), g),
        }
    }

    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        let (g, i, h) = (3 * self.hidden_dim, self.input_dim, self.hidden_dim);
        for (off, size) in [(self.w_ih, g * i), (self.b_ih, g), (self.w_hh, g * h), (self.b_hh, g)] {
            init_uniform(params, off..off + size, h, rng);
        }
    }

    /// Computes the next hidden state into `h_out` and returns the cache.
    pub fn forward(&self, p: &[f64], h: &[f64], x: &[f64], h_out: &mut [f64]) -> GruCache {
        let hd = self.hidden_dim;
        let g = 3 * hd;
        let mut gi = p[self.b_ih..self.b_ih + g].to_vec();
        matvec_acc(&p[self.w_ih..self.w_ih + g * self.input_dim], x, &mut gi);
        let mut gh = p[self.b_hh..self.b_hh + g].to_vec();
        matvec_acc(&p[self.w_hh..self.w_hh + g * hd], h, &mut gh);

        let mut r = vec![0.0; hd];
        let mut z = vec![0.0; hd];
        let mut n = vec![0.0; hd];
        let hn = gh[2 * hd..].to_vec();
        for j in 0..hd {
            r[j] = sigmoid(gi[j] + gh[j]);
            z[j] = sigmoid(gi[hd + j] + gh[hd + j]);
            n[j] = (gi[2 * hd + j] + r[j] * hn[j]).tanh();
            h_out[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
        }
        GruCache {
            x: x.to_vec(),
            h: h.to_vec(),
            r,
            z,
            n,
            hn,
        }
    }

    pub fn forward_vec(&self, p: &[f64], h: &[f64], x: &[f64]) -> (Vec<f64>, GruCache) {
        let mut out = vec![0.0; self.hidden_dim];
        let cache = self.forward(p, h, x, &mut out);
        (out, cache)
    }

    /// Given `dh_out`, accumulates parameter gradients into `grad` if given, the
    /// gradient w.r.t. the previous hidden state into `dh` and, if given,
    /// the gradient w.r.t. the input into `dx`.
    pub fn backward(
        &self,
        p: &[f64],
        cache: &GruCache,
        dh_out: &[f64],
        grad: Option<&mut [f64]>,
        dh: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let hd = self.hidden_dim;
        let g = 3 * hd;
        let mut d_gi = vec![0.0; g];
        let mut d_gh = vec![0.0; g];
        for j in 0..hd {
            let (r, z, n) = (cache.r[j], cache.z[j], cache.n[j]);
            let d = dh_out[j];
            dh[j] += d * z;
            let dn_pre = d * (1.0 - z) * (1.0 - n * n);
            let dz_pre = d * (cache.h[j] - n) * z * (1.0 - z);
            let dr_pre = dn_pre * cache.hn[j] * r * (1.0 - r);
            d_gi[j] = dr_pre;
            d_gi[hd + j] = dz_pre;
            d_gi[2 * hd + j] = dn_pre;
            d_gh[j] = dr_pre;
            d_gh[hd + j] = dz_pre;
            d_gh[2 * hd + j] = dn_pre * r;
        }
        let w_ih = self.w_ih..self.w_ih + g * self.input_dim;
        let w_hh = self.w_hh..self.w_hh + g * hd;
        if let Some(grad) = grad {
            outer_acc(&mut grad[w_ih.clone()], &d_gi, &cache.x);
            outer_acc(&mut grad[w_hh.clone()], &d_gh, &cache.h);
            for j in 0..g {
                grad[self.b_ih + j] += d_gi[j];
                grad[self.b_hh + j] += d_gh[j];
            }
        }
        matvec_t_acc(&p[w_hh], &d_gh, dh);
        if let Some(dx) = dx {
            matvec_t_acc(&p[w_ih], &d_gi, dx);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::check_grad;
    use rand::{Rng, SeedableRng};

    /// Two unrolled steps with a linear read-out, checked against finite
    /// differences for parameters, initial state and inputs.
    #[test]
    fn unrolled_gradient_matches_finite_differences() {
        let mut layout = ParamLayout::new();
        let gru = Gru::new(&mut layout, "gru", 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = vec![0.0; layout.len()];
        gru.init(&mut p, &mut rng);
        for v in &mut p {
            *v *= 3.0;
        }
        let h0: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xs: Vec<Vec<f64>> = (0..2).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let c = [0.7, -1.1, 0.4, 2.0];

        let run = |p: &[f64], h0: &[f64], xs: &[Vec<f64>]| {
            let (h1, _) = gru.forward_vec(p, h0, &xs[0]);
            let (h2, _) = gru.forward_vec(p, &h1, &xs[1]);
            h2.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };

        let (h1, c1) = gru.forward_vec(&p, &h0, &xs[0]);
        let (_, c2) = gru.forward_vec(&p, &h1, &xs[1]);
        let mut g = vec![0.0; p.len()];
        let mut dh1 = vec![0.0; 4];
        let mut dx1 = vec![0.0; 3];
        gru.backward(&p, &c2, &c, Some(&mut g), &mut dh1, Some(&mut dx1));
        let mut dh0 = vec![0.0; 4];
        let mut dx0 = vec![0.0; 3];
        gru.backward(&p, &c1, &dh1, Some(&mut g), &mut dh0, Some(&mut dx0));

        check_grad(&p, &g, |p| run(p, &h0, &xs), 1e-6);
        check_grad(&h0, &dh0, |h| run(&p, h, &xs), 1e-6);
        check_grad(&xs[0], &dx0, |x| run(&p, &h0, &[x.to_vec(), xs[1].clone()]), 1e-6);
        check_grad(&xs[1], &dx1, |x| run(&p, &h0, &[xs[0].clone(), x.to_vec()]), 1e-6);
    }

    #[test]
    fn saturated_update_gate_copies_state() {
        let mut layout = ParamLayout::new();
        let gru = Gru::new(&mut layout, "gru", 1, 2);
        let mut p = vec![0.0; layout.len()];
        // large update-gate bias drives z to one
        for j in 0..2 {
            p[gru.b_ih + 2 + j] = 50.0;
        }
        let (h, _) = gru.forward_vec(&p, &[0.3, -0.8], &[5.0]);
        assert!((h[0] - 0.3).abs() < 1e-12 && (h[1] + 0.8).abs() < 1e-12);
    }
}
