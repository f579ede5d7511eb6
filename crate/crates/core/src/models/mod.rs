//! Learned zone dynamics: the deterministic SSM with exact action gradients
//! and the stochastic RSSM with sampled latent trajectories.

mod checkpoint;
mod evaluate;
mod rssm;
pub(crate) mod ssm;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use evaluate::{evaluate_model, EvalReport, HorizonMetrics, PowerForecaster, ZoneModels, MAPE_MIN_POWER_W};
pub use rssm::{sample_streams, Rssm, RssmArch, RssmState};
pub use ssm::{LcCost, RolloutCost, Ssm, SsmArch, SsmRollout};
pub use train::{fine_tune_rssm, fine_tune_ssm, ssm_validation_loss, train_rssm, train_ssm, TrainConfig, TrainCurve, Trained};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, NormStats, DIST_DIM, OBS_DIM};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("dataset has no usable windows: {0}")]
    NoWindows(String),
    #[error("horizon {horizon} exceeds what the dataset supports")]
    HorizonTooLong { horizon: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A trained zone model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateModel {
    Ssm(Ssm),
    Rssm(Rssm),
}

impl SurrogateModel {
    pub fn stats(&self) -> &NormStats {
        match self {
            Self::Ssm(m) => &m.stats,
            Self::Rssm(m) => &m.stats,
        }
    }

    pub fn n_lags(&self) -> usize {
        match self {
            Self::Ssm(m) => m.arch.n_lags,
            Self::Rssm(m) => m.arch.n_lags,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Ssm(_) => ModelKind::Ssm,
            Self::Rssm(_) => ModelKind::Rssm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ssm,
    Rssm,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ssm" => Ok(Self::Ssm),
            "rssm" => Ok(Self::Rssm),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// One zone's records in normalized model units.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedZone {
    pub obs: Vec<[f64; OBS_DIM]>,
    pub act: Vec<f64>,
    pub dist: Vec<[f64; DIST_DIM]>,
}

impl NormalizedZone {
    pub fn new(data: &Dataset, zone: usize, stats: &NormStats) -> Self {
        let z = &data.zones[zone];
        Self {
            obs: z.observations.iter().map(|o| stats.observation(o)).collect(),
            act: z.actions.iter().map(|a| stats.action(a.setpoint)).collect(),
            dist: data.disturbances.iter().map(|d| stats.disturbance(d)).collect(),
        }
    }

    /// Encoder frame `[obs, dist]` of row `k`.
    pub fn frame(&self, k: usize) -> [f64; OBS_DIM + DIST_DIM] {
        let mut f = [0.0; OBS_DIM + DIST_DIM];
        f[..OBS_DIM].copy_from_slice(&self.obs[k]);
        f[OBS_DIM..].copy_from_slice(&self.dist[k]);
        f
    }
}

/// Recent history of one zone, in physical units, that a model conditions on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ZoneHistory {
    pub observations: Vec<crate::data::Observation>,
    pub setpoints: Vec<f64>,
    pub disturbances: Vec<crate::data::Disturbance>,
}

impl ZoneHistory {
    /// Rows `from..to` of zone `zone` in `data`.
    pub fn from_dataset(data: &Dataset, zone: usize, from: usize, to: usize) -> Self {
        let z = &data.zones[zone];
        Self {
            observations: z.observations[from..to].to_vec(),
            setpoints: z.actions[from..to].iter().map(|a| a.setpoint).collect(),
            disturbances: data.disturbances[from..to].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// The last `n` rows, or a shape error if fewer are available.
    pub fn last(&self, n: usize) -> Result<ZoneHistory, ModelError> {
        let len = self.len();
        if len < n || self.setpoints.len() != len || self.disturbances.len() != len {
            return Err(ModelError::Shape(format!("need {n} consistent history rows, have {len}")));
        }
        Ok(Self {
            observations: self.observations[len - n..].to_vec(),
            setpoints: self.setpoints[len - n..].to_vec(),
            disturbances: self.disturbances[len - n..].to_vec(),
        })
    }
}
