use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rssm::ElboConfig;
use super::{ModelError, NormalizedZone, Rssm, RssmArch, Ssm, SsmArch};
use crate::data::{Dataset, DIST_DIM, OBS_DIM};
use crate::nn::{clip_grad_norm, Adam, AdamConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub d_s: usize,
    pub d_h: usize,
    pub n_lags: usize,
    pub head_hidden: usize,
    pub decoder_hidden: Vec<usize>,
    /// Prediction steps per training window.
    pub horizon: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr` (cosine schedule).
    pub lr_final_frac: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Windows drawn per epoch; 0 uses every window.
    pub windows_per_epoch: usize,
    /// Validation windows scored per epoch; 0 uses every window.
    pub val_windows: usize,
    pub grad_clip: f64,
    /// Weight of the auxiliary temperature channel relative to power.
    pub temp_weight: f64,
    pub free_nats: f64,
    /// Observation noise std of the stochastic model's likelihood.
    pub obs_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_s: 32,
            d_h: 32,
            n_lags: 8,
            head_hidden: 64,
            decoder_hidden: vec![64, 64],
            horizon: 16,
            lr: 3e-3,
            lr_final_frac: 0.1,
            epochs: 30,
            batch_size: 16,
            windows_per_epoch: 1024,
            val_windows: 256,
            grad_clip: 5.0,
            temp_weight: 0.5,
            free_nats: 1.0,
            obs_std: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn ssm_arch(&self) -> SsmArch {
        SsmArch {
            d_s: self.d_s,
            n_lags: self.n_lags,
            decoder_hidden: self.decoder_hidden.clone(),
        }
    }

    pub fn rssm_arch(&self) -> RssmArch {
        RssmArch {
            d_h: self.d_h,
            d_s: self.d_s,
            n_lags: self.n_lags,
            head_hidden: self.head_hidden,
            decoder_hidden: self.decoder_hidden.clone(),
        }
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        let lo = self.lr * self.lr_final_frac;
        lo + 0.5 * (self.lr - lo) * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Per-epoch training diagnostics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainCurve {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Stochastic model only: mean ELBO per step (higher is better).
    pub elbo: Vec<f64>,
    pub kl: Vec<f64>,
    pub kl_clamped: Vec<f64>,
    pub post_std: Vec<f64>,
    pub prior_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub curve: TrainCurve,
}

struct Windows {
    zone: NormalizedZone,
    starts: Vec<usize>,
}

impl Windows {
    fn new(data: &Dataset, zone: usize, stats: &crate::data::NormStats, n_lags: usize, horizon: usize) -> Self {
        Self {
            zone: NormalizedZone::new(data, zone, stats),
            starts: data.window_starts(n_lags, horizon),
        }
    }

    /// Evenly spaced subset of at most `n` starts (all if `n` is 0).
    fn spread(&self, n: usize) -> Vec<usize> {
        if n == 0 || n >= self.starts.len() {
            return self.starts.clone();
        }
        (0..n).map(|i| self.starts[i * self.starts.len() / n]).collect()
    }
}

fn epoch_starts(windows: &Windows, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut starts = windows.starts.clone();
    starts.shuffle(rng);
    if cfg.windows_per_epoch > 0 {
        starts.truncate(cfg.windows_per_epoch);
    }
    starts
}

fn check_zone(data: &Dataset, zone: usize) -> Result<(), ModelError> {
    if zone >= data.n_zones() {
        return Err(ModelError::Shape(format!("zone {zone} out of range")));
    }
    data.validate().map_err(|e| ModelError::Shape(e.to_string()))
}

fn ssm_window_loss(
    m: &Ssm,
    p: &[f64],
    w: &NormalizedZone,
    k: usize,
    cfg: &TrainConfig,
    grad: Option<&mut [f64]>,
) -> f64 {
    let (l, h) = (cfg.n_lags, cfg.horizon);
    let frames: Vec<_> = (k - l..k).map(|j| w.frame(j)).collect();
    let (s0, enc) = m.encode_trace(p, &frames);
    let trace = m.rollout_trace(p, &s0, &w.act[k..k + h], &w.dist[k..k + h]);
    let weights = [cfg.temp_weight, 1.0];
    let mut loss = 0.0;
    let mut dout = vec![[0.0; OBS_DIM]; h];
    for j in 0..h {
        for c in 0..OBS_DIM {
            let e = trace.outputs[j][c] - w.obs[k + j][c];
            loss += weights[c] * e * e / h as f64;
            dout[j][c] = 2.0 * weights[c] * e / h as f64;
        }
    }
    if let Some(grad) = grad {
        let ds0 = m.rollout_backward(p, &trace, &dout, Some(&mut *grad), None);
        m.encode_backward(p, &enc, &ds0, grad);
    }
    loss
}

/// Fits a deterministic model of `zone` on multi-step prediction error.
/// The model's statistics are those of `train`.
pub fn train_ssm(
    train: &Dataset,
    val: Option<&Dataset>,
    zone: usize,
    cfg: &TrainConfig,
) -> Result<Trained<Ssm>, ModelError> {
    let model = Ssm::new(cfg.ssm_arch(), train.stats, cfg.seed)?;
    fine_tune_ssm(model, train, val, zone, cfg)
}

/// Continues training `model` on `train` for `cfg.epochs` epochs, keeping
/// its normalization statistics. The architecture fields of `cfg` must
/// match the model.
pub fn fine_tune_ssm(
    mut model: Ssm,
    train: &Dataset,
    val: Option<&Dataset>,
    zone: usize,
    cfg: &TrainConfig,
) -> Result<Trained<Ssm>, ModelError> {
    check_zone(train, zone)?;
    if model.arch != cfg.ssm_arch() {
        return Err(ModelError::Shape("training config disagrees with the model architecture".into()));
    }
    let stats = model.stats;
    let windows = Windows::new(train, zone, &stats, cfg.n_lags, cfg.horizon);
    if windows.starts.is_empty() {
        return Err(ModelError::NoWindows(format!(
            "need {} contiguous rows",
            cfg.n_lags + cfg.horizon
        )));
    }
    let val_windows = val.map(|v| Windows::new(v, zone, &stats, cfg.n_lags, cfg.horizon));
    let val_starts = val_windows.as_ref().map(|w| w.spread(cfg.val_windows));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x55aa);
    let mut adam = Adam::new(model.n_params(), AdamConfig { lr: cfg.lr, ..Default::default() });
    let mut grad = vec![0.0; model.n_params()];
    let mut curve = TrainCurve::default();
    for epoch in 0..cfg.epochs {
        adam.config.lr = cfg.lr_at(epoch);
        let starts = epoch_starts(&windows, cfg, &mut rng);
        let mut total = 0.0;
        for batch in starts.chunks(cfg.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &k in batch {
                total += ssm_window_loss(&model, &model.params, &windows.zone, k, cfg, Some(&mut grad));
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            clip_grad_norm(&mut grad, cfg.grad_clip);
            adam.step(&mut model.params, &grad);
        }
        let loss = total / starts.len() as f64;
        if !loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::Diverged { epoch, loss });
        }
        curve.train_loss.push(loss);
        if let (Some(vw), Some(vs)) = (&val_windows, &val_starts) {
            curve.val_loss.push(ssm_loss_on(&model, vw, vs, cfg));
        }
    }
    Ok(Trained { model, curve })
}

fn ssm_loss_on(model: &Ssm, w: &Windows, starts: &[usize], cfg: &TrainConfig) -> f64 {
    if starts.is_empty() {
        return f64::NAN;
    }
    let sum: f64 = starts
        .iter()
        .map(|&k| ssm_window_loss(model, &model.params, &w.zone, k, cfg, None))
        .sum();
    sum / starts.len() as f64
}

/// Mean multi-step training objective of `model` on `data` for `zone`.
pub fn ssm_validation_loss(model: &Ssm, data: &Dataset, zone: usize, cfg: &TrainConfig) -> f64 {
    let w = Windows::new(data, zone, &model.stats, cfg.n_lags, cfg.horizon);
    ssm_loss_on(model, &w, &w.spread(cfg.val_windows), cfg)
}

fn rssm_window(
    m: &Rssm,
    w: &NormalizedZone,
    k: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    grad: Option<&mut [f64]>,
) -> super::rssm::ElboTerms {
    let range = k - cfg.n_lags..k + cfg.horizon;
    let elbo = ElboConfig {
        free_nats: cfg.free_nats,
        obs_std: cfg.obs_std,
        temp_weight: cfg.temp_weight,
    };
    let dist: &[[f64; DIST_DIM]] = &w.dist[range.clone()];
    m.elbo_window(&m.params, &w.obs[range.clone()], &w.act[range], dist, &elbo, rng, grad)
}

/// Fits a stochastic model of `zone` by maximizing the evidence lower bound
/// with a free-nats floor on the KL term.
pub fn train_rssm(
    train: &Dataset,
    val: Option<&Dataset>,
    zone: usize,
    cfg: &TrainConfig,
) -> Result<Trained<Rssm>, ModelError> {
    let model = Rssm::new(cfg.rssm_arch(), train.stats, cfg.seed)?;
    fine_tune_rssm(model, train, val, zone, cfg)
}

/// Continues ELBO training of `model`, keeping its normalization statistics.
pub fn fine_tune_rssm(
    mut model: Rssm,
    train: &Dataset,
    val: Option<&Dataset>,
    zone: usize,
    cfg: &TrainConfig,
) -> Result<Trained<Rssm>, ModelError> {
    check_zone(train, zone)?;
    if model.arch != cfg.rssm_arch() {
        return Err(ModelError::Shape("training config disagrees with the model architecture".into()));
    }
    let stats = model.stats;
    let windows = Windows::new(train, zone, &stats, cfg.n_lags, cfg.horizon);
    if windows.starts.is_empty() {
        return Err(ModelError::NoWindows(format!(
            "need {} contiguous rows",
            cfg.n_lags + cfg.horizon
        )));
    }
    let val_windows = val.map(|v| Windows::new(v, zone, &stats, cfg.n_lags, cfg.horizon));
    let val_starts = val_windows.as_ref().map(|w| w.spread(cfg.val_windows));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x55aa);
    let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1234);
    let n_params = model.params.len();
    let mut adam = Adam::new(n_params, AdamConfig { lr: cfg.lr, ..Default::default() });
    let mut grad = vec![0.0; n_params];
    let mut curve = TrainCurve::default();
    for epoch in 0..cfg.epochs {
        adam.config.lr = cfg.lr_at(epoch);
        let starts = epoch_starts(&windows, cfg, &mut rng);
        let mut sums = [0.0; 5];
        for batch in starts.chunks(cfg.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &k in batch {
                let t = rssm_window(&model, &windows.zone, k, cfg, &mut noise, Some(&mut grad));
                sums[0] += t.reconstruction + t.kl_clamped;
                sums[1] += t.kl;
                sums[2] += t.kl_clamped;
                sums[3] += t.post_std;
                sums[4] += t.prior_std;
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            clip_grad_norm(&mut grad, cfg.grad_clip);
            adam.step(&mut model.params, &grad);
        }
        let n = starts.len() as f64;
        let loss = sums[0] / n;
        if !loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::Diverged { epoch, loss });
        }
        curve.train_loss.push(loss);
        curve.elbo.push(-loss);
        curve.kl.push(sums[1] / n);
        curve.kl_clamped.push(sums[2] / n);
        curve.post_std.push(sums[3] / n);
        curve.prior_std.push(sums[4] / n);
        if let (Some(vw), Some(vs)) = (&val_windows, &val_starts) {
            let mut vr = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a1);
            let v: f64 = vs
                .iter()
                .map(|&k| {
                    let t = rssm_window(&model, &vw.zone, k, cfg, &mut vr, None);
                    t.reconstruction + t.kl_clamped
                })
                .sum();
            curve.val_loss.push(v / vs.len().max(1) as f64);
        }
    }
    Ok(Trained { model, curve })
}
