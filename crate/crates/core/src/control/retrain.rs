use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::models::{fine_tune_rssm, fine_tune_ssm, ModelError, SurrogateModel, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrainConfig {
    /// Timesteps between fine-tuning rounds; `None` disables retraining.
    pub cadence: Option<usize>,
    /// Optimizer settings. Architecture fields are taken from each model.
    pub train: TrainConfig,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            cadence: None,
            train: TrainConfig {
                epochs: 3,
                lr: 1e-3,
                windows_per_epoch: 256,
                ..Default::default()
            },
        }
    }
}

fn config_for(model: &SurrogateModel, base: &TrainConfig) -> TrainConfig {
    let mut cfg = base.clone();
    match model {
        SurrogateModel::Ssm(m) => {
            cfg.d_s = m.arch.d_s;
            cfg.n_lags = m.arch.n_lags;
            cfg.decoder_hidden = m.arch.decoder_hidden.clone();
        }
        SurrogateModel::Rssm(m) => {
            cfg.d_h = m.arch.d_h;
            cfg.d_s = m.arch.d_s;
            cfg.n_lags = m.arch.n_lags;
            cfg.head_hidden = m.arch.head_hidden;
            cfg.decoder_hidden = m.arch.decoder_hidden.clone();
        }
    }
    cfg
}

/// Fine-tunes every zone model on `new_data`, zone `i` on column `i`.
/// Returns whether any model changed: nothing happens when retraining is
/// disabled or `new_data` is too short for a single training window.
pub fn retrain_hook(models: &mut [SurrogateModel], new_data: &Dataset, cfg: &RetrainConfig) -> Result<bool, ModelError> {
    if cfg.cadence.is_none() {
        return Ok(false);
    }
    if new_data.n_zones() != models.len() {
        return Err(ModelError::Shape(format!(
            "{} zone models, retraining data has {} zones",
            models.len(),
            new_data.n_zones()
        )));
    }
    let mut changed = false;
    for (zone, model) in models.iter_mut().enumerate() {
        let tc = config_for(model, &cfg.train);
        if new_data.window_starts(tc.n_lags, tc.horizon).is_empty() {
            continue;
        }
        let tc = TrainConfig {
            seed: cfg.train.seed ^ (zone as u64).wrapping_mul(0x9e37_79b9),
            ..tc
        };
        *model = match model {
            SurrogateModel::Ssm(m) => SurrogateModel::Ssm(fine_tune_ssm(m.clone(), new_data, None, zone, &tc)?.model),
            SurrogateModel::Rssm(m) => SurrogateModel::Rssm(fine_tune_rssm(m.clone(), new_data, None, zone, &tc)?.model),
        };
        changed = true;
    }
    Ok(changed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy::linear_zone;
    use crate::models::{ssm_validation_loss, train_ssm};

    fn small() -> TrainConfig {
        TrainConfig {
            d_s: 4,
            n_lags: 4,
            decoder_hidden: vec![8],
            horizon: 4,
            epochs: 4,
            windows_per_epoch: 128,
            val_windows: 0,
            ..Default::default()
        }
    }

    fn model() -> (SurrogateModel, Dataset) {
        let data = linear_zone(600, 0.0, 3);
        let m = train_ssm(&data, None, 0, &small()).unwrap().model;
        (SurrogateModel::Ssm(m), data)
    }

    #[test]
    fn disabled_is_identity() {
        let (m, data) = model();
        let mut models = vec![m.clone()];
        let cfg = RetrainConfig::default();
        assert!(!retrain_hook(&mut models, &data, &cfg).unwrap());
        assert_eq!(models[0], m);
    }

    #[test]
    fn no_new_samples_is_identity() {
        let (m, data) = model();
        let mut models = vec![m.clone()];
        let cfg = RetrainConfig {
            cadence: Some(96),
            train: small(),
        };
        let empty = data.select_rows(&[]);
        assert!(!retrain_hook(&mut models, &empty, &cfg).unwrap());
        assert_eq!(models[0], m);
    }

    #[test]
    fn retraining_after_a_shift_lowers_held_out_error() {
        let (m, data) = model();
        // shifted regime: power offset by a constant the model never saw
        let mut shifted = linear_zone(1200, 0.0, 11);
        for o in &mut shifted.zones[0].observations {
            o.hvac_power += 600.0;
        }
        let fresh = shifted.select_rows(&(0..800).collect::<Vec<_>>());
        let held_out = shifted.select_rows(&(800..1200).collect::<Vec<_>>());
        let mut eval_cfg = small();
        eval_cfg.val_windows = 0;
        let before = match &m {
            SurrogateModel::Ssm(s) => ssm_validation_loss(s, &held_out, 0, &eval_cfg),
            _ => unreachable!(),
        };
        let mut models = vec![m];
        let cfg = RetrainConfig {
            cadence: Some(96),
            train: TrainConfig { epochs: 6, lr: 3e-3, ..small() },
        };
        assert!(retrain_hook(&mut models, &fresh, &cfg).unwrap());
        let after = match &models[0] {
            SurrogateModel::Ssm(s) => ssm_validation_loss(s, &held_out, 0, &eval_cfg),
            _ => unreachable!(),
        };
        assert!(after < before, "held-out loss {before} -> {after}");
        let _ = data;
    }

    #[test]
    fn retraining_is_deterministic() {
        let (m, data) = model();
        let cfg = RetrainConfig {
            cadence: Some(96),
            train: small(),
        };
        let mut a = vec![m.clone()];
        let mut b = vec![m];
        retrain_hook(&mut a, &data, &cfg).unwrap();
        retrain_hook(&mut b, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
