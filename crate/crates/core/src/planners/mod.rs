//! Local-controller planners, constraint conversion and the setpoint lattice.

mod bounds;
mod conversion;
mod ddpn;
mod sdpn;
mod zone;

pub use bounds::ComfortBounds;
pub use conversion::{cap_at, convert_constraint, horizon_caps, Conversion, ConversionOutcome, DrEvent};
pub use ddpn::{ddpn_solve, ddpn_solve_traced, DdpnConfig, ShootingModel};
pub use sdpn::{candidate_count, sdpn_build_bank, sdpn_select, BankEntry, TrajectoryBank};
pub use zone::{RssmZone, SsmZone, WorstCase};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid comfort bounds: {0}")]
    Bounds(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("slack must lie in [0, 1), got {0}")]
    InvalidSlack(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("{count} candidates exceed the cap of {cap}")]
    CandidateOverflow { count: u128, cap: usize },
    #[error("trajectory bank is empty")]
    EmptyBank,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Horizon power forecast of one zone under setpoint changes.
pub trait HorizonModel {
    fn horizon(&self) -> usize;
    /// Predicted heater power in watts for each step.
    fn predict(&self, delta: &[f64]) -> Result<Vec<f64>, PlanError>;
    /// Model steps evaluated so far.
    fn evaluations(&self) -> usize;
}

/// A local plan: lattice setpoint changes and the power they are predicted to draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub delta: Vec<f64>,
    /// Predicted power, W.
    pub u_pred: Vec<f64>,
    pub objective: f64,
    /// Gradient iterations for shooting; zero for selection.
    pub iterations: usize,
}

/// Planner settings shared by both local-controller kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub rho: f64,
    pub nu: f64,
    pub bounds: ComfortBounds,
    pub horizon: usize,
    pub block: usize,
    pub k_samples: usize,
    pub max_gd_iters: usize,
    pub candidate_cap: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            rho: 52.0,
            nu: 0.1,
            bounds: ComfortBounds::default(),
            horizon: 4,
            block: 2,
            k_samples: 100,
            max_gd_iters: 200,
            candidate_cap: 100_000,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        self.bounds.validate()?;
        if !(0.0..1.0).contains(&self.nu) {
            return Err(PlanError::InvalidSlack(self.nu));
        }
        if !(self.rho > 0.0) {
            return Err(PlanError::Shape(format!("rho {} must be positive", self.rho)));
        }
        if self.horizon == 0 || self.block == 0 || self.horizon % self.block != 0 {
            return Err(PlanError::Shape(format!(
                "block {} must divide horizon {}",
                self.block, self.horizon
            )));
        }
        if self.k_samples == 0 {
            return Err(PlanError::Shape("need at least one sample".into()));
        }
        Ok(())
    }

    pub fn ddpn(&self) -> DdpnConfig {
        DdpnConfig {
            max_iters: self.max_gd_iters,
            ..DdpnConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_uses_documented_keys() {
        let json = serde_json::to_value(PlannerConfig::default()).unwrap();
        for key in ["rho", "nu", "bounds", "horizon", "block", "k_samples", "max_gd_iters", "candidate_cap"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["bounds"]["m"], -2.0);
        assert_eq!(json["bounds"]["M"], 0.0);
        let partial: PlannerConfig = serde_json::from_str(r#"{"nu": 0.05, "bounds": {"m": -1, "M": 0, "resolution": 0.5}}"#).unwrap();
        assert_eq!(partial.nu, 0.05);
        assert_eq!(partial.bounds.lattice(), vec![-1.0, -0.5, 0.0]);
        assert_eq!(partial.horizon, 4);
        partial.validate().unwrap();
        assert!(PlannerConfig { block: 3, ..Default::default() }.validate().is_err());
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::data::Disturbance;

    pub(crate) fn dists(h: usize) -> Vec<Disturbance> {
        (0..h)
            .map(|t| Disturbance {
                t_out: -5.0 - t as f64,
                rh: 70.0,
                dni: 0.0,
                hour_sin: (t as f64 * 0.3).sin(),
                hour_cos: (t as f64 * 0.3).cos(),
                dow_sin: 0.0,
                dow_cos: 1.0,
            })
            .collect()
    }
}
