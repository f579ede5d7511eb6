//! Metrics and charts computed from run logs and model evaluations. Every
//! function here is a pure function of its inputs.

mod svg;

pub use svg::{power_chart, residual_chart, slack_chart};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::RunLog;
use crate::models::EvalReport;
use crate::planners::DrEvent;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("event [{start}, {end}) is not covered by a run of {steps} steps")]
    UncoveredEvent { start: usize, end: usize, steps: usize },
    #[error("nothing to report: {0}")]
    Empty(String),
    #[error("evaluation reports disagree: {0}")]
    Mismatch(String),
}

/// Constraint satisfaction during one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventViolation {
    pub start: usize,
    pub end: usize,
    /// Steps whose true building power exceeded the cap, %.
    pub actual_pct: f64,
    /// Steps whose power predicted at decision time exceeded the cap, %.
    pub predicted_pct: f64,
    /// Steps at which the planner had no prediction (no planning yet).
    pub unpredicted_steps: usize,
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Percentage of each event's steps above its cap, in reality and in the
/// planner's predictions.
pub fn violation_metrics(log: &RunLog, events: &[DrEvent]) -> Result<Vec<EventViolation>, ReportError> {
    events
        .iter()
        .map(|e| {
            if e.end > log.records.len() {
                return Err(ReportError::UncoveredEvent {
                    start: e.start,
                    end: e.end,
                    steps: log.records.len(),
                });
            }
            let mut actual = 0;
            let mut predicted = 0;
            let mut unpredicted = 0;
            for r in &log.records[e.start..e.end] {
                let cap = e.p_max[r.t - e.start];
                if r.true_power > cap {
                    actual += 1;
                }
                match r.predicted_power {
                    Some(p) if p > cap => predicted += 1,
                    Some(_) => {}
                    None => unpredicted += 1,
                }
            }
            let n = e.end - e.start;
            Ok(EventViolation {
                start: e.start,
                end: e.end,
                actual_pct: pct(actual, n),
                predicted_pct: pct(predicted, n),
                unpredicted_steps: unpredicted,
            })
        })
        .collect()
}

/// Shares of event steps per zone with `|δ| = 0`, `0 < |δ| <= 1` and
/// `1 < |δ| <= 2`, in %.
pub fn delta_buckets(log: &RunLog, events: &[DrEvent]) -> Vec<[f64; 3]> {
    let steps = event_steps(log, events);
    (0..log.n_zones)
        .map(|z| {
            let mut counts = [0usize; 3];
            for &t in &steps {
                let d = log.records[t].deltas[z].abs();
                let b = if d == 0.0 {
                    0
                } else if d <= 1.0 {
                    1
                } else {
                    2
                };
                counts[b] += 1;
            }
            counts.map(|c| pct(c, steps.len()))
        })
        .collect()
}

fn event_steps(log: &RunLog, events: &[DrEvent]) -> Vec<usize> {
    let n = log.records.len();
    let mut steps: Vec<usize> = events.iter().flat_map(|e| e.start.min(n)..e.end.min(n)).collect();
    steps.sort_unstable();
    steps.dedup();
    steps
}

/// Mean `|δ|` per zone over the event steps, °C.
pub fn mean_abs_delta(log: &RunLog, events: &[DrEvent]) -> Vec<f64> {
    let steps = event_steps(log, events);
    (0..log.n_zones)
        .map(|z| {
            if steps.is_empty() {
                return 0.0;
            }
            steps.iter().map(|&t| log.records[t].deltas[z].abs()).sum::<f64>() / steps.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self { mean, std: var.sqrt(), n }
    }
}

/// Wall-clock statistics, s. Hardware dependent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingSummary {
    pub dpn_call: MeanStd,
    pub coordinator_iter: MeanStd,
    pub lc_iter: MeanStd,
    pub lc_setup: MeanStd,
}

/// Timing over the episodes that ran ADMM.
pub fn timing_summary(log: &RunLog) -> TimingSummary {
    let admm: Vec<_> = log
        .timing
        .iter()
        .filter(|t| !t.lc_iter_s.is_empty())
        .collect();
    let flat = |f: fn(&crate::control::EpisodeTiming) -> &Vec<f64>| -> Vec<f64> {
        admm.iter().flat_map(|t| f(t).iter().copied()).collect()
    };
    TimingSummary {
        dpn_call: MeanStd::of(&admm.iter().map(|t| t.dpn_call_s).collect::<Vec<_>>()),
        coordinator_iter: MeanStd::of(&flat(|t| &t.coordinator_iter_s)),
        lc_iter: MeanStd::of(&flat(|t| &t.lc_iter_s)),
        lc_setup: MeanStd::of(&admm.iter().map(|t| t.setup_s).collect::<Vec<_>>()),
    }
}

/// Summary of one control run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub events: Vec<EventViolation>,
    /// Over all event steps, %.
    pub violation_pct: f64,
    pub predicted_violation_pct: f64,
    pub mean_delta_per_zone: Vec<f64>,
    pub delta_buckets: Vec<[f64; 3]>,
    pub admm_episodes: usize,
    pub converged_episodes: usize,
    pub timing: TimingSummary,
}

impl RunMetrics {
    /// Metrics against the events stored in the log.
    pub fn from_log(name: &str, log: &RunLog) -> Result<Self, ReportError> {
        let events = violation_metrics(log, &log.events)?;
        let steps: Vec<usize> = log.events.iter().map(|e| e.end - e.start).collect();
        let total: usize = steps.iter().sum();
        let weighted = |f: fn(&EventViolation) -> f64| -> f64 {
            if total == 0 {
                return 0.0;
            }
            events.iter().zip(&steps).map(|(v, n)| f(v) * *n as f64).sum::<f64>() / total as f64
        };
        let admm: Vec<_> = log.episodes.iter().filter(|e| e.outcome.tag() == "run_admm").collect();
        Ok(Self {
            name: name.to_string(),
            violation_pct: weighted(|v| v.actual_pct),
            predicted_violation_pct: weighted(|v| v.predicted_pct),
            events,
            mean_delta_per_zone: mean_abs_delta(log, &log.events),
            delta_buckets: delta_buckets(log, &log.events),
            admm_episodes: admm.len(),
            converged_episodes: admm.iter().filter(|e| e.converged).count(),
            timing: timing_summary(log),
        })
    }
}

/// Building MAPE at one horizon across training seeds, %.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapeSummary {
    pub horizon: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Model accuracy over several training seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub name: String,
    pub seeds: usize,
    pub building_mape: Vec<MapeSummary>,
    /// Per horizon, the per-zone MAE averaged over seeds, W.
    pub zone_mae: Vec<(usize, Vec<f64>)>,
}

impl ModelMetrics {
    pub fn from_reports(name: &str, reports: &[EvalReport]) -> Result<Self, ReportError> {
        let first = reports.first().ok_or_else(|| ReportError::Empty("no evaluation reports".into()))?;
        let mut building_mape = Vec::new();
        let mut zone_mae = Vec::new();
        for h in &first.horizons {
            let rows = reports
                .iter()
                .map(|r| {
                    r.at(h.horizon)
                        .filter(|m| m.zone_mae.len() == h.zone_mae.len())
                        .ok_or_else(|| ReportError::Mismatch(format!("horizon {} missing or resized", h.horizon)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mapes: Vec<f64> = rows.iter().map(|m| m.building_mape).collect();
            building_mape.push(MapeSummary {
                horizon: h.horizon,
                mean: mapes.iter().sum::<f64>() / mapes.len() as f64,
                min: mapes.iter().copied().fold(f64::INFINITY, f64::min),
                max: mapes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
            let mae = (0..h.zone_mae.len())
                .map(|z| rows.iter().map(|m| m.zone_mae[z]).sum::<f64>() / rows.len() as f64)
                .collect();
            zone_mae.push((h.horizon, mae));
        }
        Ok(Self {
            name: name.to_string(),
            seeds: reports.len(),
            building_mape,
            zone_mae,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: Vec<RunMetrics>,
    pub models: Vec<ModelMetrics>,
}

impl MetricsReport {
    /// One row per event of every run:
    /// `run,event,start,end,actual_pct,predicted_pct`.
    pub fn violations_csv(&self) -> String {
        let mut out = String::from("run,event,start,end,actual_pct,predicted_pct\n");
        for r in &self.runs {
            for (i, v) in r.events.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{:.1},{:.1}\n",
                    r.name, i, v.start, v.end, v.actual_pct, v.predicted_pct
                ));
            }
        }
        out
    }

    /// `run,zone,mean_abs_delta,pct_zero,pct_upto_1,pct_upto_2`.
    pub fn deltas_csv(&self) -> String {
        let mut out = String::from("run,zone,mean_abs_delta,pct_zero,pct_upto_1,pct_upto_2\n");
        for r in &self.runs {
            for (z, (m, b)) in r.mean_delta_per_zone.iter().zip(&r.delta_buckets).enumerate() {
                out.push_str(&format!("{},{z},{m:.3},{:.1},{:.1},{:.1}\n", r.name, b[0], b[1], b[2]));
            }
        }
        out
    }

    /// `run,phase,mean_s,std_s,n`.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("run,phase,mean_s,std_s,n\n");
        for r in &self.runs {
            let t = &r.timing;
            for (phase, m) in [
                ("dpn_call", t.dpn_call),
                ("coordinator_iter", t.coordinator_iter),
                ("lc_iter", t.lc_iter),
                ("lc_setup", t.lc_setup),
            ] {
                out.push_str(&format!("{},{phase},{:e},{:e},{}\n", r.name, m.mean, m.std, m.n));
            }
        }
        out
    }

    /// `model,horizon,mape_mean,mape_min,mape_max`.
    pub fn models_csv(&self) -> String {
        let mut out = String::from("model,horizon,mape_mean,mape_min,mape_max\n");
        for m in &self.models {
            for s in &m.building_mape {
                out.push_str(&format!("{},{},{:.2},{:.2},{:.2}\n", m.name, s.horizon, s.mean, s.min, s.max));
            }
        }
        out
    }
}
