use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::data::{collect, ProtocolConfig};
use crate::planners::DrEvent;
use crate::sim::Simulator;

use super::{ControlError, Scenario};

/// The shipped demand-response scenario: the protocol building, run at a
/// constant occupant setpoint through the test month, with a daily event
/// window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub protocol: ProtocolConfig,
    /// Occupant setpoint of every zone, °C.
    pub baseline_setpoint: f64,
    /// Steps simulated at the baseline before the run; they become the
    /// models' initial history.
    pub warmup_steps: usize,
    /// Limits the run to the first days of the test month.
    pub days: Option<usize>,
    /// Event window `[start, end)` in hours of the day.
    pub event_start_hour: u32,
    pub event_end_hour: u32,
    /// Largest required reduction below the baseline peak, as a fraction.
    pub max_reduction: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            protocol: ProtocolConfig::default(),
            baseline_setpoint: 21.0,
            warmup_steps: 192,
            days: None,
            event_start_hour: 6,
            event_end_hour: 9,
            max_reduction: 0.25,
        }
    }
}

/// Builds the event-free scenario for the test month. `horizon` is the
/// planning horizon the run will use; the last `horizon - 1` steps of the
/// weather only serve as forecasts.
pub fn shipped_scenario(cfg: &ScenarioConfig, horizon: usize) -> Result<Scenario, ControlError> {
    let p = &cfg.protocol;
    let weather = p.weather_trace();
    let month = NaiveDate::from_ymd_opt(p.test_month.year, p.test_month.month, 1)
        .ok_or_else(|| ControlError::Config("invalid test month".into()))?
        .and_hms_opt(0, 0, 0)
        .expect("midnight");
    let start = weather
        .iter()
        .position(|w| w.timestamp >= month)
        .ok_or_else(|| ControlError::Config("weather does not reach the test month".into()))?;
    if start < cfg.warmup_steps {
        return Err(ControlError::Config(format!(
            "only {start} weather steps before the test month, warm-up needs {}",
            cfg.warmup_steps
        )));
    }
    let end = weather[start..]
        .iter()
        .position(|w| crate::data::MonthLabel::of(w.timestamp) != p.test_month)
        .map_or(weather.len(), |k| start + k);

    let mut sim = Simulator::from_config(&p.building(), p.initial_temp, p.dt_s)?;
    let n = sim.n_zones();
    let warm = &weather[start - cfg.warmup_steps..start];
    let history = collect(&mut sim, &vec![vec![cfg.baseline_setpoint; warm.len()]; n], warm)?;

    let weather = weather[start..end].to_vec();
    let available = weather.len().saturating_sub(horizon.saturating_sub(1));
    let steps_per_day = (86_400.0 / p.dt_s).round() as usize;
    let n_steps = cfg.days.map_or(available, |d| (d * steps_per_day).min(available));
    Ok(Scenario {
        sim,
        history,
        baseline: vec![vec![cfg.baseline_setpoint; n]; weather.len()],
        weather,
        events: Vec::new(),
        n_steps,
    })
}

/// One event per calendar day over steps `[0, timestamps.len())` covering
/// the hours `[start_hour, end_hour)`, all with cap `p_max`.
pub fn daily_events(timestamps: &[NaiveDateTime], start_hour: u32, end_hour: u32, p_max: f64) -> Vec<DrEvent> {
    let mut events: Vec<DrEvent> = Vec::new();
    let mut day = None;
    for (t, ts) in timestamps.iter().enumerate() {
        if !(start_hour..end_hour).contains(&ts.hour()) {
            continue;
        }
        match events.last_mut() {
            Some(e) if day == Some(ts.date()) && e.end == t => {
                e.end = t + 1;
                e.p_max.push(p_max);
            }
            _ => {
                day = Some(ts.date());
                events.push(DrEvent::constant(t, t + 1, p_max));
            }
        }
    }
    events
}

/// Building power of the event-free scenario, W per step.
pub fn baseline_run(scenario: &Scenario) -> Result<Vec<f64>, ControlError> {
    let mut sim = scenario.sim.clone();
    (0..scenario.n_steps)
        .map(|t| {
            let s = sim.step(&scenario.baseline[t], &scenario.weather[t])?;
            Ok(s.heater_powers.iter().sum())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Building power cap, W.
    pub p_max: f64,
    /// Baseline peak power inside each event, W.
    pub event_peaks: Vec<f64>,
    /// Reduction of each event peak needed to meet the cap, as a fraction.
    pub required_reduction: Vec<f64>,
    /// Events whose baseline exceeds the cap.
    pub action_events: usize,
}

/// Chooses one cap for all `events` so that the event with the highest
/// baseline peak needs a reduction of exactly `max_reduction`.
pub fn calibrate_p_max(baseline: &[f64], events: &[DrEvent], max_reduction: f64) -> Result<Calibration, ControlError> {
    if !(0.0..1.0).contains(&max_reduction) {
        return Err(ControlError::Config(format!("max_reduction {max_reduction} must lie in [0, 1)")));
    }
    let event_peaks = events
        .iter()
        .map(|e| {
            baseline
                .get(e.start..e.end)
                .map(|w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .ok_or_else(|| ControlError::Config(format!("event [{}, {}) outside the baseline run", e.start, e.end)))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let top = event_peaks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Err(ControlError::Config("no positive baseline peak to calibrate against".into()));
    }
    let p_max = (1.0 - max_reduction) * top;
    let required_reduction: Vec<f64> = event_peaks.iter().map(|p| (1.0 - p_max / p).max(0.0)).collect();
    let action_events = event_peaks.iter().filter(|p| **p > p_max).count();
    Ok(Calibration {
        p_max,
        event_peaks,
        required_reduction,
        action_events,
    })
}

impl Calibration {
    /// Copies of `events` with the calibrated cap.
    pub fn apply(&self, events: &[DrEvent]) -> Vec<DrEvent> {
        events
            .iter()
            .map(|e| DrEvent::constant(e.start, e.end, self.p_max))
            .collect()
    }
}
