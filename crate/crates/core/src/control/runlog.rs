use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::admm::IterRecord;
use crate::planners::{ConversionOutcome, DrEvent};

use super::{ControlConfig, ControlError};

/// One simulated timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub timestamp: NaiveDateTime,
    /// Mean building heater power over the step, W.
    pub true_power: f64,
    /// Building power the planner predicted for this step when it decided, W.
    pub predicted_power: Option<f64>,
    /// Cap in force, W; absent outside events.
    pub p_max: Option<f64>,
    pub deltas: Vec<f64>,
    pub setpoints: Vec<f64>,
    pub zone_temps: Vec<f64>,
    pub zone_powers: Vec<f64>,
    /// Planning episode whose decision was applied.
    pub episode: Option<usize>,
    pub outcome: Option<String>,
    pub admm_iters: usize,
}

/// One planning instant with a finite cap in its horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub t: usize,
    pub outcome: ConversionOutcome,
    /// Caps over the horizon, W; `None` for unconstrained steps.
    pub caps: Vec<Option<f64>>,
    pub p_bu: Option<Vec<f64>>,
    pub p_lb: Option<Vec<f64>>,
    pub iterations: usize,
    /// Whether ADMM met the primal tolerance before the iteration limit.
    pub converged: bool,
    pub residuals: Vec<IterRecord>,
    /// Final plan per zone.
    pub plans: Vec<Vec<f64>>,
    /// Predicted building power over the horizon for the final plans, W.
    pub predicted: Vec<f64>,
    /// Model steps evaluated by the zones while answering power targets.
    pub planning_model_evals: usize,
}

/// Wall-clock measurements of one episode, kept apart from the
/// deterministic record.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTiming {
    pub episode: usize,
    /// The whole planning call, s.
    pub dpn_call_s: f64,
    /// Coordinator solve and dual update per ADMM iteration, s.
    pub coordinator_iter_s: Vec<f64>,
    /// Local planning time of every zone reply, s.
    pub lc_iter_s: Vec<f64>,
    /// One-off preparation in the zones (trajectory banks), summed, s.
    pub setup_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: ControlConfig,
    pub n_zones: usize,
    pub events: Vec<DrEvent>,
    pub records: Vec<StepRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub timing: Vec<EpisodeTiming>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunLog {
    /// Everything except wall-clock timing, as JSON text. Two runs with the
    /// same inputs must produce identical strings.
    pub fn deterministic_json(&self) -> Result<String, ControlError> {
        #[derive(Serialize)]
        struct View<'a> {
            n_zones: usize,
            events: &'a [DrEvent],
            records: &'a [StepRecord],
            episodes: &'a [EpisodeRecord],
        }
        serde_json::to_string(&View {
            n_zones: self.n_zones,
            events: &self.events,
            records: &self.records,
            episodes: &self.episodes,
        })
        .map_err(|e| ControlError::Malformed(e.to_string()))
    }

    /// Per-step CSV: `t,timestamp,true_power_w,predicted_power_w,p_max_w,
    /// episode,outcome,admm_iters` then per-zone delta, setpoint, temperature
    /// and power columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ControlError> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.n_zones;
        let mut header: Vec<String> = [
            "t",
            "timestamp",
            "true_power_w",
            "predicted_power_w",
            "p_max_w",
            "episode",
            "outcome",
            "admm_iters",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for prefix in ["delta", "setpoint", "temp", "power"] {
            header.extend((0..n).map(|i| format!("{prefix}_{i}")));
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.t.to_string(),
                r.timestamp.format(crate::sim::TIMESTAMP_FORMAT).to_string(),
                r.true_power.to_string(),
                opt(r.predicted_power),
                opt(r.p_max),
                r.episode.map(|e| e.to_string()).unwrap_or_default(),
                r.outcome.clone().unwrap_or_default(),
                r.admm_iters.to_string(),
            ];
            for v in [&r.deltas, &r.setpoints, &r.zone_temps, &r.zone_powers] {
                row.extend(v.iter().map(|x| x.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `run.json` (complete log), `runlog.csv` and `residuals.csv`.
    pub fn save(&self, dir: &Path) -> Result<(), ControlError> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string(self).map_err(|e| ControlError::Malformed(e.to_string()))?;
        fs::write(dir.join("run.json"), json)?;
        self.write_csv(fs::File::create(dir.join("runlog.csv"))?)?;
        self.write_residuals_csv(fs::File::create(dir.join("residuals.csv"))?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ControlError> {
        let text = fs::read_to_string(dir.join("run.json"))?;
        serde_json::from_str(&text).map_err(|e| ControlError::Malformed(e.to_string()))
    }

    /// `episode,t,iter,lagrangian,primal_residual` for every ADMM iteration.
    pub fn write_residuals_csv<W: Write>(&self, out: W) -> Result<(), ControlError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "t", "iter", "lagrangian", "primal_residual"])?;
        for e in &self.episodes {
            for (k, r) in e.residuals.iter().enumerate() {
                w.write_record([
                    e.episode.to_string(),
                    e.t.to_string(),
                    (k + 1).to_string(),
                    r.lagrangian.to_string(),
                    r.primal_residual.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
