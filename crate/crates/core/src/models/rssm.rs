use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ssm::{POWER, TEMP};
use super::{ModelError, ZoneHistory};
use crate::data::{Disturbance, NormStats, DIST_DIM, OBS_DIM};
use crate::nn::{sigmoid, softplus, Gru, GruCache, Mlp, MlpCache, ParamLayout};

/// Lower bound added to every emitted standard deviation.
pub const STD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssmArch {
    pub d_h: usize,
    pub d_s: usize,
    pub n_lags: usize,
    /// Hidden width of the prior and posterior heads.
    pub head_hidden: usize,
    pub decoder_hidden: Vec<usize>,
}

impl Default for RssmArch {
    fn default() -> Self {
        Self {
            d_h: 32,
            d_s: 32,
            n_lags: 8,
            head_hidden: 64,
            decoder_hidden: vec![64, 64],
        }
    }
}

/// Deterministic path `h` and stochastic latent `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssmState {
    pub h: Vec<f64>,
    pub s: Vec<f64>,
}

/// Recurrent state-space model with a deterministic GRU path and a
/// Gaussian latent sampled at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Rssm {
    pub arch: RssmArch,
    pub params: Vec<f64>,
    pub stats: NormStats,
    /// Test hook: replaces every prior standard deviation with this value.
    pub force_prior_std: Option<f64>,
    pub(crate) layout: ParamLayout,
    transition: Gru,
    prior: Mlp,
    posterior: Mlp,
    decoder: Mlp,
}

/// Output of one prior step.
#[derive(Debug, Clone, PartialEq)]
pub struct RssmStep {
    pub h: Vec<f64>,
    pub prior_mean: Vec<f64>,
    pub prior_std: Vec<f64>,
    pub s: Vec<f64>,
}

/// Loss terms of one training window, averaged over its steps.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ElboTerms {
    pub reconstruction: f64,
    pub kl: f64,
    pub kl_clamped: f64,
    pub post_std: f64,
    pub prior_std: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ElboConfig {
    pub free_nats: f64,
    pub obs_std: f64,
    pub temp_weight: f64,
}

struct StepCache {
    gru: GruCache,
    prior: MlpCache,
    prior_raw: Vec<f64>,
    post: MlpCache,
    post_raw: Vec<f64>,
    eps: Vec<f64>,
    dec: MlpCache,
    y: Vec<f64>,
}

/// Splits a head output into mean and floored std.
fn gaussian(raw: &[f64], d_s: usize) -> (Vec<f64>, Vec<f64>) {
    let mean = raw[..d_s].to_vec();
    let std = raw[d_s..].iter().map(|&r| softplus(r) + STD_FLOOR).collect();
    (mean, std)
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

impl Rssm {
    fn build(arch: &RssmArch) -> (ParamLayout, Gru, Mlp, Mlp, Mlp) {
        let mut layout = ParamLayout::new();
        let transition = Gru::new(&mut layout, "transition", arch.d_s + 1 + DIST_DIM, arch.d_h);
        let prior = Mlp::new(&mut layout, "prior", &[arch.d_h, arch.head_hidden, 2 * arch.d_s]);
        let posterior = Mlp::new(
            &mut layout,
            "posterior",
            &[arch.d_h + OBS_DIM, arch.head_hidden, 2 * arch.d_s],
        );
        let mut dims = vec![arch.d_h + arch.d_s];
        dims.extend(&arch.decoder_hidden);
        dims.push(OBS_DIM);
        let decoder = Mlp::new(&mut layout, "decoder", &dims);
        (layout, transition, prior, posterior, decoder)
    }

    pub fn zeroed(arch: RssmArch, stats: NormStats) -> Result<Self, ModelError> {
        if arch.d_h == 0 || arch.d_s == 0 || arch.n_lags == 0 || arch.head_hidden == 0 {
            return Err(ModelError::Shape("widths and n_lags must be positive".into()));
        }
        let (layout, transition, prior, posterior, decoder) = Self::build(&arch);
        Ok(Self {
            params: vec![0.0; layout.len()],
            arch,
            stats,
            force_prior_std: None,
            layout,
            transition,
            prior,
            posterior,
            decoder,
        })
    }

    pub fn new(arch: RssmArch, stats: NormStats, seed: u64) -> Result<Self, ModelError> {
        let mut m = Self::zeroed(arch, stats)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        m.transition.init(&mut m.params, &mut rng);
        m.prior.init(&mut m.params, &mut rng);
        m.posterior.init(&mut m.params, &mut rng);
        m.decoder.init(&mut m.params, &mut rng);
        Ok(m)
    }

    pub fn from_params(arch: RssmArch, stats: NormStats, params: Vec<f64>) -> Result<Self, ModelError> {
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

    pub fn initial_state(&self) -> RssmState {
        RssmState {
            h: vec![0.0; self.arch.d_h],
            s: vec![0.0; self.arch.d_s],
        }
    }

    fn deterministic(&self, state: &RssmState, action: f64, dist: &[f64; DIST_DIM]) -> Vec<f64> {
        let x = concat(&[&state.s, &[action], dist]);
        self.transition.forward_vec(&self.params, &state.h, &x).0
    }

    /// Prior mean and std of `s` given `h`.
    pub fn prior(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let raw = self.prior.forward(&self.params, h).0;
        let (mean, mut std) = gaussian(&raw, self.arch.d_s);
        if let Some(forced) = self.force_prior_std {
            std.iter_mut().for_each(|s| *s = forced);
        }
        (mean, std)
    }

    /// Posterior mean and std of `s` given `h` and a normalized observation.
    pub fn posterior(&self, h: &[f64], obs: &[f64; OBS_DIM]) -> (Vec<f64>, Vec<f64>) {
        let raw = self.posterior.forward(&self.params, &concat(&[h, obs])).0;
        gaussian(&raw, self.arch.d_s)
    }

    /// Normalized `[temp, power]` prediction.
    pub fn decode(&self, state: &RssmState) -> [f64; OBS_DIM] {
        let y = self.decoder.forward(&self.params, &concat(&[&state.h, &state.s])).0;
        [y[0], y[1]]
    }

    /// One prior step in normalized units, sampling from `rng`.
    pub fn step(
        &self,
        state: &RssmState,
        action: f64,
        dist: &[f64; DIST_DIM],
        rng: &mut ChaCha8Rng,
    ) -> Result<RssmStep, ModelError> {
        if state.h.len() != self.arch.d_h || state.s.len() != self.arch.d_s {
            return Err(ModelError::Shape("state widths disagree with the model".into()));
        }
        let h = self.deterministic(state, action, dist);
        let (prior_mean, prior_std) = self.prior(&h);
        let s = prior_mean
            .iter()
            .zip(&prior_std)
            .map(|(m, sd)| {
                let z: f64 = StandardNormal.sample(rng);
                m + sd * z
            })
            .collect();
        Ok(RssmStep {
            h,
            prior_mean,
            prior_std,
            s,
        })
    }

    /// Filters `history` with posterior means, starting from the zero state.
    pub fn filter(&self, history: &ZoneHistory) -> Result<RssmState, ModelError> {
        if history.len() != self.arch.n_lags
            || history.setpoints.len() != history.len()
            || history.disturbances.len() != history.len()
        {
            return Err(ModelError::Shape(format!(
                "filter expects {} consistent lag rows, got {}",
                self.arch.n_lags,
                history.len()
            )));
        }
        let mut state = self.initial_state();
        for k in 0..history.len() {
            let a = self.stats.action(history.setpoints[k]);
            let d = self.stats.disturbance(&history.disturbances[k]);
            let o = self.stats.observation(&history.observations[k]);
            state.h = self.deterministic(&state, a, &d);
            state.s = self.posterior(&state.h, &o).0;
        }
        Ok(state)
    }

    /// One sampled trajectory per random stream, as normalized outputs.
    pub fn rollout_samples_normalized(
        &self,
        state: &RssmState,
        actions: &[f64],
        dists: &[[f64; DIST_DIM]],
        rngs: &mut [ChaCha8Rng],
    ) -> Vec<Vec<[f64; OBS_DIM]>> {
        rngs.iter_mut()
            .map(|rng| {
                let mut st = state.clone();
                let mut out = Vec::with_capacity(actions.len());
                for k in 0..actions.len() {
                    let step = self
                        .step(&st, actions[k], &dists[k], rng)
                        .expect("state shape checked by caller");
                    st = RssmState { h: step.h, s: step.s };
                    out.push(self.decode(&st));
                }
                out
            })
            .collect()
    }

    /// Sampled power trajectories in watts (clipped at zero), one per stream.
    pub fn rollout_samples(
        &self,
        state: &RssmState,
        setpoints: &[f64],
        dists: &[Disturbance],
        rngs: &mut [ChaCha8Rng],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        if setpoints.len() != dists.len() {
            return Err(ModelError::Shape(format!(
                "{} actions but {} disturbances",
                setpoints.len(),
                dists.len()
            )));
        }
        if state.h.len() != self.arch.d_h || state.s.len() != self.arch.d_s {
            return Err(ModelError::Shape("state widths disagree with the model".into()));
        }
        let a: Vec<f64> = setpoints.iter().map(|&sp| self.stats.action(sp)).collect();
        let d: Vec<_> = dists.iter().map(|d| self.stats.disturbance(d)).collect();
        Ok(self
            .rollout_samples_normalized(state, &a, &d, rngs)
            .into_iter()
            .map(|traj| traj.iter().map(|y| self.power_watts(y)).collect())
            .collect())
    }

    /// `k` sampled power trajectories using streams `0..k` of `seed`.
    pub fn rollout_samples_seeded(
        &self,
        state: &RssmState,
        setpoints: &[f64],
        dists: &[Disturbance],
        k: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut rngs = sample_streams(seed, k);
        self.rollout_samples(state, setpoints, dists, &mut rngs)
    }

    pub fn power_watts(&self, y: &[f64; OBS_DIM]) -> f64 {
        self.stats.hvac_power.denormalize(y[POWER]).max(0.0)
    }

    pub fn temp_celsius(&self, y: &[f64; OBS_DIM]) -> f64 {
        self.stats.zone_temp.denormalize(y[TEMP])
    }

    /// Negative ELBO of one window with reparameterized posterior samples,
    /// averaged over steps. Accumulates its gradient into `grad` if given.
    pub(crate) fn elbo_window(
        &self,
        p: &[f64],
        obs: &[[f64; OBS_DIM]],
        act: &[f64],
        dist: &[[f64; DIST_DIM]],
        cfg: &ElboConfig,
        rng: &mut ChaCha8Rng,
        grad: Option<&mut [f64]>,
    ) -> ElboTerms {
        let (d_h, d_s) = (self.arch.d_h, self.arch.d_s);
        let t_len = obs.len();
        let inv_t = 1.0 / t_len as f64;
        let inv_var = 1.0 / (cfg.obs_std * cfg.obs_std);
        let w = [cfg.temp_weight, 1.0];

        let mut h = vec![0.0; d_h];
        let mut s = vec![0.0; d_s];
        let mut caches = Vec::with_capacity(t_len);
        let mut terms = ElboTerms::default();
        let mut kl_active = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let x = concat(&[&s, &[act[t]], &dist[t]]);
            let (h_next, gru) = self.transition.forward_vec(p, &h, &x);
            let (prior_raw, prior) = self.prior.forward(p, &h_next);
            let (post_raw, post) = self.posterior.forward(p, &concat(&[&h_next, &obs[t]]));
            let (mp, sp) = gaussian(&prior_raw, d_s);
            let (mq, sq) = gaussian(&post_raw, d_s);
            let eps: Vec<f64> = (0..d_s).map(|_| StandardNormal.sample(rng)).collect();
            let s_next: Vec<f64> = (0..d_s).map(|j| mq[j] + sq[j] * eps[j]).collect();
            let (y, dec) = self.decoder.forward(p, &concat(&[&h_next, &s_next]));

            let rec: f64 = (0..OBS_DIM).map(|c| 0.5 * w[c] * (y[c] - obs[t][c]).powi(2) * inv_var).sum();
            let kl: f64 = (0..d_s)
                .map(|j| (sp[j] / sq[j]).ln() + (sq[j].powi(2) + (mq[j] - mp[j]).powi(2)) / (2.0 * sp[j].powi(2)) - 0.5)
                .sum();
            terms.reconstruction += rec * inv_t;
            terms.kl += kl * inv_t;
            terms.kl_clamped += kl.max(cfg.free_nats) * inv_t;
            terms.post_std += sq.iter().sum::<f64>() / d_s as f64 * inv_t;
            terms.prior_std += sp.iter().sum::<f64>() / d_s as f64 * inv_t;
            kl_active.push(kl > cfg.free_nats);

            caches.push(StepCache {
                gru,
                prior,
                prior_raw,
                post,
                post_raw,
                eps,
                dec,
                y,
            });
            h = h_next;
            s = s_next;
        }

        let Some(grad) = grad else {
            return terms;
        };
        let mut dh = vec![0.0; d_h];
        let mut ds = vec![0.0; d_s];
        for t in (0..t_len).rev() {
            let c = &caches[t];
            let dy: Vec<f64> = (0..OBS_DIM)
                .map(|k| w[k] * (c.y[k] - obs[t][k]) * inv_var * inv_t)
                .collect();
            let d_hs = self.decoder.backward(p, &c.dec, &dy, Some(&mut *grad));
            for j in 0..d_h {
                dh[j] += d_hs[j];
            }
            for j in 0..d_s {
                ds[j] += d_hs[d_h + j];
            }

            let (mp, sp) = gaussian(&c.prior_raw, d_s);
            let (mq, sq) = gaussian(&c.post_raw, d_s);
            let mut d_mq = ds.clone();
            let mut d_sq: Vec<f64> = (0..d_s).map(|j| ds[j] * c.eps[j]).collect();
            let mut d_mp = vec![0.0; d_s];
            let mut d_sp = vec![0.0; d_s];
            if kl_active[t] {
                for j in 0..d_s {
                    let diff = mq[j] - mp[j];
                    let vp = sp[j] * sp[j];
                    d_mq[j] += diff / vp * inv_t;
                    d_mp[j] -= diff / vp * inv_t;
                    d_sq[j] += (-1.0 / sq[j] + sq[j] / vp) * inv_t;
                    d_sp[j] += (1.0 / sp[j] - (sq[j] * sq[j] + diff * diff) / (vp * sp[j])) * inv_t;
                }
            }
            let mut d_post_raw = d_mq;
            d_post_raw.extend((0..d_s).map(|j| d_sq[j] * sigmoid(c.post_raw[d_s + j])));
            let mut d_prior_raw = d_mp;
            d_prior_raw.extend((0..d_s).map(|j| d_sp[j] * sigmoid(c.prior_raw[d_s + j])));

            let d_ho = self.posterior.backward(p, &c.post, &d_post_raw, Some(&mut *grad));
            let d_hp = self.prior.backward(p, &c.prior, &d_prior_raw, Some(&mut *grad));
            for j in 0..d_h {
                dh[j] += d_ho[j] + d_hp[j];
            }

            let mut dh_prev = vec![0.0; d_h];
            let mut dx = vec![0.0; d_s + 1 + DIST_DIM];
            self.transition
                .backward(p, &c.gru, &dh, Some(&mut *grad), &mut dh_prev, Some(&mut dx));
            dh = dh_prev;
            ds = dx[..d_s].to_vec();
        }
        terms
    }
}

/// Independent random streams `0..k` derived from `seed`.
pub fn sample_streams(seed: u64, k: usize) -> Vec<ChaCha8Rng> {
    (0..k)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect()
}
