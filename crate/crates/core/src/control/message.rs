use serde::{Deserialize, Serialize};

use crate::data::Disturbance;
use crate::models::ZoneHistory;

use super::ControlError;

pub const PROTOCOL: &str = "dpn/1";

/// First line sent on a socket connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub proto: String,
    pub n_zones: usize,
    pub horizon: usize,
}

/// What a local controller needs to plan one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneContext {
    /// The most recent rows, oldest first.
    pub history: ZoneHistory,
    pub base_setpoints: Vec<f64>,
    pub disturbances: Vec<Disturbance>,
    /// Seed of the episode's sampling streams.
    pub seed: u64,
}

/// Coordinator/local-controller traffic. Power targets, duals and predicted
/// powers inside the ADMM exchange are in scaled units (watts divided by
/// the shared power scale); forecasts are in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Observe {
        zone: usize,
        episode: usize,
        context: ZoneContext,
    },
    Forecast {
        zone: usize,
        episode: usize,
        p_bu: Vec<f64>,
        p_lb: Vec<f64>,
        p_init: Vec<f64>,
    },
    PowerTarget {
        zone: usize,
        iter: usize,
        u_bar: Vec<f64>,
        lambda: Vec<f64>,
    },
    PowerReply {
        zone: usize,
        iter: usize,
        u_pred: Vec<f64>,
        delta: Vec<f64>,
        /// Planning time of this reply, s.
        compute_s: f64,
        /// One-off episode preparation done before planning, s.
        setup_s: f64,
        /// Model steps evaluated while planning this reply.
        model_evals: usize,
    },
    Converged {
        iter: usize,
    },
    Abort {
        reason: String,
    },
}

impl Message {
    pub fn zone(&self) -> Option<usize> {
        match self {
            Message::Observe { zone, .. }
            | Message::Forecast { zone, .. }
            | Message::PowerTarget { zone, .. }
            | Message::PowerReply { zone, .. } => Some(*zone),
            Message::Converged { .. } | Message::Abort { .. } => None,
        }
    }

    /// Checks zone indices and that every horizon vector has `horizon` entries.
    pub fn validate(&self, n_zones: usize, horizon: usize) -> Result<(), ControlError> {
        if let Some(z) = self.zone() {
            if z >= n_zones {
                return Err(ControlError::Malformed(format!("zone {z} out of {n_zones}")));
            }
        }
        let vectors: Vec<&Vec<f64>> = match self {
            Message::Observe { context, .. } => {
                if context.disturbances.len() != horizon {
                    return Err(ControlError::Malformed("disturbance forecast length".into()));
                }
                vec![&context.base_setpoints]
            }
            Message::Forecast { p_bu, p_lb, p_init, .. } => vec![p_bu, p_lb, p_init],
            Message::PowerTarget { u_bar, lambda, .. } => vec![u_bar, lambda],
            Message::PowerReply { u_pred, delta, .. } => vec![u_pred, delta],
            Message::Converged { .. } | Message::Abort { .. } => vec![],
        };
        if let Some(v) = vectors.iter().find(|v| v.len() != horizon) {
            return Err(ControlError::Malformed(format!("vector of length {} for horizon {horizon}", v.len())));
        }
        Ok(())
    }

    /// One JSON object followed by a newline.
    pub fn to_line(&self) -> Result<String, ControlError> {
        let mut s = serde_json::to_string(self).map_err(|e| ControlError::Malformed(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_line(line: &str) -> Result<Self, ControlError> {
        serde_json::from_str(line.trim_end()).map_err(|e| ControlError::Malformed(format!("{e}: {line:?}")))
    }
}
