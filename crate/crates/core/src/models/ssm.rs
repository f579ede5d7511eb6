use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, ZoneHistory};
use crate::data::{Disturbance, NormStats, DIST_DIM, OBS_DIM};
use crate::nn::{Gru, GruCache, Mlp, MlpCache, ParamLayout};

/// Output channel order of the decoders.
pub(crate) const TEMP: usize = 0;
pub(crate) const POWER: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmArch {
    pub d_s: usize,
    pub n_lags: usize,
    pub decoder_hidden: Vec<usize>,
}

impl Default for SsmArch {
    fn default() -> Self {
        Self {
            d_s: 32,
            n_lags: 8,
            decoder_hidden: vec![64, 64],
        }
    }
}

/// Deterministic encoder / recurrent transition / decoder model of one zone.
#[derive(Debug, Clone, PartialEq)]
pub struct Ssm {
    pub arch: SsmArch,
    pub params: Vec<f64>,
    pub stats: NormStats,
    pub(crate) layout: ParamLayout,
    encoder: Gru,
    transition: Gru,
    decoder: Mlp,
}

/// Denormalized rollout output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SsmRollout {
    /// Heater power, W, clipped at zero.
    pub powers: Vec<f64>,
    pub temps: Vec<f64>,
}

/// Fixed data of the local-controller objective
/// `|d|^2 + lambda . (target - u) + rho/2 |target - u|^2`
/// where `u` is predicted power divided by `power_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct LcCost {
    pub duals: Vec<f64>,
    pub targets: Vec<f64>,
    pub rho: f64,
    pub power_scale: f64,
}

impl LcCost {
    /// Objective value for setpoint changes `delta` and scaled powers `u`.
    pub fn value(&self, delta: &[f64], u: &[f64]) -> f64 {
        let mut j: f64 = delta.iter().map(|d| d * d).sum();
        for k in 0..u.len() {
            let r = self.targets[k] - u[k];
            j += self.duals[k] * r + 0.5 * self.rho * r * r;
        }
        j
    }

    /// Partial derivative of the objective with respect to `u[k]`.
    pub fn d_u(&self, k: usize, u: f64) -> f64 {
        -self.duals[k] - self.rho * (self.targets[k] - u)
    }
}

/// Objective value and its gradient with respect to the setpoint changes.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutCost {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Predicted scaled powers along the rollout.
    pub u: Vec<f64>,
}

/// Saved forward pass of a transition/decoder unroll.
pub(crate) struct RolloutTrace {
    trans: Vec<GruCache>,
    dec: Vec<MlpCache>,
    pub outputs: Vec<[f64; OBS_DIM]>,
}

pub(crate) struct EncodeTrace {
    caches: Vec<GruCache>,
}

impl Ssm {
    fn build(arch: &SsmArch) -> (ParamLayout, Gru, Gru, Mlp) {
        let mut layout = ParamLayout::new();
        let encoder = Gru::new(&mut layout, "encoder", OBS_DIM + DIST_DIM, arch.d_s);
        let transition = Gru::new(&mut layout, "transition", 1 + DIST_DIM, arch.d_s);
        let mut dims = vec![arch.d_s];
        dims.extend(&arch.decoder_hidden);
        dims.push(OBS_DIM);
        let decoder = Mlp::new(&mut layout, "decoder", &dims);
        (layout, encoder, transition, decoder)
    }

    /// All weights zero.
    pub fn zeroed(arch: SsmArch, stats: NormStats) -> Result<Self, ModelError> {
        if arch.d_s == 0 || arch.n_lags == 0 {
            return Err(ModelError::Shape("d_s and n_lags must be positive".into()));
        }
        let (layout, encoder, transition, decoder) = Self::build(&arch);
        Ok(Self {
            params: vec![0.0; layout.len()],
            arch,
            stats,
            layout,
            encoder,
            transition,
            decoder,
        })
    }

    pub fn new(arch: SsmArch, stats: NormStats, seed: u64) -> Result<Self, ModelError> {
        let mut m = Self::zeroed(arch, stats)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.encoder.init(&mut m.params, &mut rng);
        m.transition.init(&mut m.params, &mut rng);
        m.decoder.init(&mut m.params, &mut rng);
        Ok(m)
    }

    /// Rebuilds a model from a flat parameter vector.
    pub fn from_params(arch: SsmArch, stats: NormStats, params: Vec<f64>) -> Result<Self, ModelError> {
        let mut m = Self::zeroed(arch, stats)?;
        if params.len() != m.params.len() {
            return Err(ModelError::Shape(format!(
                "expected {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn encode_trace(&self, p: &[f64], frames: &[[f64; OBS_DIM + DIST_DIM]]) -> (Vec<f64>, EncodeTrace) {
        let mut h = vec![0.0; self.arch.d_s];
        let mut caches = Vec::with_capacity(frames.len());
        for f in frames {
            let (next, cache) = self.encoder.forward_vec(p, &h, f);
            caches.push(cache);
            h = next;
        }
        (h, EncodeTrace { caches })
    }

    /// Accumulates encoder parameter gradients given the latent gradient.
    pub(crate) fn encode_backward(&self, p: &[f64], trace: &EncodeTrace, ds0: &[f64], grad: &mut [f64]) {
        let mut dh = ds0.to_vec();
        for cache in trace.caches.iter().rev() {
            let mut prev = vec![0.0; self.arch.d_s];
            self.encoder.backward(p, cache, &dh, Some(&mut *grad), &mut prev, None);
            dh = prev;
        }
    }

    /// Latent state from normalized `[obs, dist]` frames, oldest first.
    pub fn encode_normalized(&self, frames: &[[f64; OBS_DIM + DIST_DIM]]) -> Result<Vec<f64>, ModelError> {
        if frames.len() != self.arch.n_lags {
            return Err(ModelError::Shape(format!(
                "encoder expects {} lag frames, got {}",
                self.arch.n_lags,
                frames.len()
            )));
        }
        Ok(self.encode_trace(&self.params, frames).0)
    }

    /// Latent state from the last `n_lags` rows of `history`.
    pub fn encode(&self, history: &ZoneHistory) -> Result<Vec<f64>, ModelError> {
        if history.len() != self.arch.n_lags {
            return Err(ModelError::Shape(format!(
                "encoder expects {} lag frames, got {}",
                self.arch.n_lags,
                history.len()
            )));
        }
        let frames: Vec<_> = history
            .observations
            .iter()
            .zip(&history.disturbances)
            .map(|(o, d)| {
                let mut f = [0.0; OBS_DIM + DIST_DIM];
                f[..OBS_DIM].copy_from_slice(&self.stats.observation(o));
                f[OBS_DIM..].copy_from_slice(&self.stats.disturbance(d));
                f
            })
            .collect();
        self.encode_normalized(&frames)
    }

    /// One transition step in normalized units.
    pub fn transition(&self, s: &[f64], action: f64, dist: &[f64; DIST_DIM]) -> Vec<f64> {
        let x = transition_input(action, dist);
        self.transition.forward_vec(&self.params, s, &x).0
    }

    /// Normalized `[temp, power]` prediction for latent `s`.
    pub fn decode(&self, s: &[f64]) -> [f64; OBS_DIM] {
        let y = self.decoder.forward(&self.params, s).0;
        [y[0], y[1]]
    }

    pub(crate) fn rollout_trace(
        &self,
        p: &[f64],
        s0: &[f64],
        actions: &[f64],
        dists: &[[f64; DIST_DIM]],
    ) -> RolloutTrace {
        let h = actions.len();
        let mut trace = RolloutTrace {
            trans: Vec::with_capacity(h),
            dec: Vec::with_capacity(h),
            outputs: Vec::with_capacity(h),
        };
        let mut s = s0.to_vec();
        for k in 0..h {
            let x = transition_input(actions[k], &dists[k]);
            let (next, tc) = self.transition.forward_vec(p, &s, &x);
            let (y, dc) = self.decoder.forward(p, &next);
            trace.trans.push(tc);
            trace.dec.push(dc);
            trace.outputs.push([y[0], y[1]]);
            s = next;
        }
        trace
    }

    /// Back-propagates output gradients `dout` through an unroll. Returns the
    /// gradient with respect to the initial latent; accumulates parameter
    /// gradients into `grad` and action gradients into `d_actions` if given.
    pub(crate) fn rollout_backward(
        &self,
        p: &[f64],
        trace: &RolloutTrace,
        dout: &[[f64; OBS_DIM]],
        mut grad: Option<&mut [f64]>,
        mut d_actions: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let d_s = self.arch.d_s;
        let mut ds = vec![0.0; d_s];
        for k in (0..trace.trans.len()).rev() {
            let from_dec = self.decoder.backward(p, &trace.dec[k], &dout[k], grad.as_deref_mut());
            for (a, b) in ds.iter_mut().zip(&from_dec) {
                *a += b;
            }
            let mut prev = vec![0.0; d_s];
            let mut dx = [0.0; 1 + DIST_DIM];
            self.transition
                .backward(p, &trace.trans[k], &ds, grad.as_deref_mut(), &mut prev, Some(&mut dx));
            if let Some(da) = d_actions.as_deref_mut() {
                da[k] += dx[0];
            }
            ds = prev;
        }
        ds
    }

    /// Normalized `[temp, power]` predictions along an unroll from `s0`.
    pub fn rollout_normalized(&self, s0: &[f64], actions: &[f64], dists: &[[f64; DIST_DIM]]) -> Vec<[f64; OBS_DIM]> {
        let mut out = Vec::with_capacity(actions.len());
        let mut s = s0.to_vec();
        for k in 0..actions.len() {
            s = self.transition(&s, actions[k], &dists[k]);
            out.push(self.decode(&s));
        }
        out
    }

    fn check_lengths(&self, s0: &[f64], setpoints: usize, dists: usize) -> Result<(), ModelError> {
        if s0.len() != self.arch.d_s {
            return Err(ModelError::Shape(format!("latent width {} != {}", s0.len(), self.arch.d_s)));
        }
        if setpoints != dists {
            return Err(ModelError::Shape(format!("{setpoints} actions but {dists} disturbances")));
        }
        Ok(())
    }

    /// Physical-unit rollout under absolute `setpoints`.
    pub fn rollout(&self, s0: &[f64], setpoints: &[f64], dists: &[Disturbance]) -> Result<SsmRollout, ModelError> {
        self.check_lengths(s0, setpoints.len(), dists.len())?;
        let a: Vec<f64> = setpoints.iter().map(|&sp| self.stats.action(sp)).collect();
        let d: Vec<_> = dists.iter().map(|d| self.stats.disturbance(d)).collect();
        let out = self.rollout_normalized(s0, &a, &d);
        Ok(SsmRollout {
            powers: out
                .iter()
                .map(|y| self.stats.hvac_power.denormalize(y[POWER]).max(0.0))
                .collect(),
            temps: out.iter().map(|y| self.stats.zone_temp.denormalize(y[TEMP])).collect(),
        })
    }

    /// Local-controller objective for setpoint changes `delta` on top of
    /// `base_setpoints`, with its exact gradient with respect to `delta`.
    pub fn rollout_grad(
        &self,
        s0: &[f64],
        base_setpoints: &[f64],
        delta: &[f64],
        dists: &[Disturbance],
        cost: &LcCost,
    ) -> Result<RolloutCost, ModelError> {
        let h = delta.len();
        self.check_lengths(s0, base_setpoints.len(), dists.len())?;
        if h != base_setpoints.len() || cost.duals.len() != h || cost.targets.len() != h {
            return Err(ModelError::Shape(format!("horizon {h} disagrees with inputs or cost")));
        }
        if !(cost.power_scale > 0.0) {
            return Err(ModelError::Shape("power scale must be positive".into()));
        }
        let a: Vec<f64> = (0..h).map(|k| self.stats.action(base_setpoints[k] + delta[k])).collect();
        let d: Vec<_> = dists.iter().map(|d| self.stats.disturbance(d)).collect();
        let trace = self.rollout_trace(&self.params, s0, &a, &d);
        if trace.outputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("rollout prediction"));
        }

        let p_std = self.stats.hvac_power.std;
        let mut u = Vec::with_capacity(h);
        let mut dout = vec![[0.0; OBS_DIM]; h];
        for k in 0..h {
            let watts = self.stats.hvac_power.denormalize(trace.outputs[k][POWER]);
            let uk = watts.max(0.0) / cost.power_scale;
            if watts > 0.0 {
                dout[k][POWER] = cost.d_u(k, uk) * p_std / cost.power_scale;
            }
            u.push(uk);
        }
        let mut da = vec![0.0; h];
        self.rollout_backward(&self.params, &trace, &dout, None, Some(&mut da));
        let sp_std = self.stats.setpoint.std;
        let grad: Vec<f64> = (0..h).map(|k| 2.0 * delta[k] + da[k] / sp_std).collect();
        let value = cost.value(delta, &u);
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite("rollout gradient"));
        }
        Ok(RolloutCost { value, grad, u })
    }

    /// Differentiable rollout in normalized units: returns `sum_k w . y_k`
    /// for output weights `w_k`, and its gradient with respect to the
    /// normalized actions.
    pub fn linear_readout_grad(
        &self,
        s0: &[f64],
        actions: &[f64],
        dists: &[[f64; DIST_DIM]],
        weights: &[[f64; OBS_DIM]],
    ) -> (f64, Vec<f64>) {
        let trace = self.rollout_trace(&self.params, s0, actions, dists);
        let value = trace
            .outputs
            .iter()
            .zip(weights)
            .map(|(y, w)| y[0] * w[0] + y[1] * w[1])
            .sum();
        let mut da = vec![0.0; actions.len()];
        self.rollout_backward(&self.params, &trace, weights, None, Some(&mut da));
        (value, da)
    }
}

fn transition_input(action: f64, dist: &[f64; DIST_DIM]) -> [f64; 1 + DIST_DIM] {
    let mut x = [0.0; 1 + DIST_DIM];
    x[0] = action;
    x[1..].copy_from_slice(dist);
    x
}
