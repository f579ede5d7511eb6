//! Multi-zone RC thermal building simulator.
//!
//! Each zone is a single thermal capacitance coupled to the outdoor air through
//! an envelope resistance and to its neighbours through inter-zone
//! resistances. A heating-only proportional setpoint tracker drives the zone
//! heater. Integration is forward Euler with fixed internal substeps.

mod building;
mod weather;

pub use building::{default_building, BuildingConfig};
pub use weather::{read_weather_csv, write_weather_csv, WeatherRecord, TIMESTAMP_FORMAT};

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hours in one week; internal gain schedules are indexed by hour-of-week.
pub const HOURS_PER_WEEK: usize = 168;

/// Largest internal integration substep, in seconds.
pub const MAX_SUBSTEP_S: f64 = 60.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid zone parameters for zone {zone}: {reason}")]
    InvalidParams { zone: usize, reason: String },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid weather record: {0}")]
    InvalidWeather(String),
    #[error("timestep must be positive, got {0}")]
    NonPositiveTimestep(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Physical parameters of one zone and its setpoint tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneParams {
    /// J/°C
    pub capacitance: f64,
    /// Envelope resistance to outdoor air, °C/W.
    pub r_out: f64,
    /// W
    pub heater_max: f64,
    /// Proportional tracker gain, W/°C.
    pub tracker_gain: f64,
    /// °C
    pub tracker_deadband: f64,
    /// Internal gains in W, one entry per hour of the week (Monday 00:00 first).
    pub internal_gain_schedule: Vec<f64>,
    /// Effective solar aperture in m²; solar gain is `solar_aperture * dni`.
    pub solar_aperture: f64,
}

impl ZoneParams {
    pub fn validate(&self, zone: usize) -> Result<(), SimError> {
        let bad = |reason: &str| SimError::InvalidParams {
            zone,
            reason: reason.to_string(),
        };
        if !(self.capacitance > 0.0) {
            return Err(bad("capacitance must be > 0"));
        }
        if !(self.r_out > 0.0) {
            return Err(bad("r_out must be > 0"));
        }
        if !(self.heater_max > 0.0) {
            return Err(bad("heater_max must be > 0"));
        }
        if !(self.tracker_gain > 0.0) {
            return Err(bad("tracker_gain must be > 0"));
        }
        if !(self.tracker_deadband >= 0.0) {
            return Err(bad("tracker_deadband must be >= 0"));
        }
        if self.internal_gain_schedule.len() != HOURS_PER_WEEK {
            return Err(bad("internal_gain_schedule must have 168 entries"));
        }
        if !(self.solar_aperture >= 0.0) {
            return Err(bad("solar_aperture must be >= 0"));
        }
        Ok(())
    }

    /// Internal gain in W at the given time.
    pub fn internal_gain(&self, at: NaiveDateTime) -> f64 {
        self.internal_gain_schedule[hour_of_week(at)]
    }
}

pub fn hour_of_week(at: NaiveDateTime) -> usize {
    at.weekday().num_days_from_monday() as usize * 24 + at.hour() as usize
}

/// Undirected inter-zone coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingTopology {
    n_zones: usize,
    edges: Vec<(usize, usize, f64)>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl BuildingTopology {
    pub fn new(n_zones: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self, SimError> {
        let mut neighbors = vec![Vec::new(); n_zones];
        let mut seen = std::collections::HashSet::new();
        for &(i, j, r) in &edges {
            if i >= n_zones || j >= n_zones {
                return Err(SimError::InvalidTopology(format!(
                    "edge ({i}, {j}) out of range for {n_zones} zones"
                )));
            }
            if i == j {
                return Err(SimError::InvalidTopology(format!("self edge on zone {i}")));
            }
            if !(r > 0.0) {
                return Err(SimError::InvalidTopology(format!(
                    "edge ({i}, {j}) has non-positive resistance {r}"
                )));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(SimError::InvalidTopology(format!(
                    "duplicate edge between {i} and {j}"
                )));
            }
            neighbors[i].push((j, r));
            neighbors[j].push((i, r));
        }
        Ok(Self {
            n_zones,
            edges,
            neighbors,
        })
    }

    pub fn n_zones(&self) -> usize {
        self.n_zones
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, zone: usize) -> &[(usize, f64)] {
        &self.neighbors[zone]
    }
}

/// Ground-truth simulator state at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: usize,
    /// Zone air temperatures, °C.
    pub temps: Vec<f64>,
    /// Mean heater power over the last step, W.
    pub heater_powers: Vec<f64>,
}

impl SimState {
    pub fn uniform(n_zones: usize, temp: f64) -> Self {
        Self {
            t: 0,
            temps: vec![temp; n_zones],
            heater_powers: vec![0.0; n_zones],
        }
    }
}

/// Heating-only proportional tracker with deadband.
pub fn heater_power(temp: f64, setpoint: f64, params: &ZoneParams) -> f64 {
    let error = setpoint - temp;
    if error > params.tracker_deadband {
        (params.tracker_gain * error).clamp(0.0, params.heater_max)
    } else {
        0.0
    }
}

/// Advances the building by `dt` seconds with setpoints held constant.
///
/// Integrates with `ceil(dt / max_substep)` equal forward-Euler substeps. The
/// returned heater powers are the mean tracker output over `dt`.
pub fn step(
    state: &SimState,
    setpoints: &[f64],
    weather: &WeatherRecord,
    dt: f64,
    topology: &BuildingTopology,
    params: &[ZoneParams],
) -> Result<SimState, SimError> {
    step_with_substep(state, setpoints, weather, dt, topology, params, MAX_SUBSTEP_S)
}

pub fn step_with_substep(
    state: &SimState,
    setpoints: &[f64],
    weather: &WeatherRecord,
    dt: f64,
    topology: &BuildingTopology,
    params: &[ZoneParams],
    max_substep: f64,
) -> Result<SimState, SimError> {
    let n = topology.n_zones();
    for (what, got) in [
        ("zone params", params.len()),
        ("setpoints", setpoints.len()),
        ("temperatures", state.temps.len()),
        ("heater powers", state.heater_powers.len()),
    ] {
        if got != n {
            return Err(SimError::DimensionMismatch {
                what,
                expected: n,
                got,
            });
        }
    }
    if !(dt > 0.0) {
        return Err(SimError::NonPositiveTimestep(dt));
    }
    let n_sub = (dt / max_substep).ceil().max(1.0) as usize;
    let h = dt / n_sub as f64;

    let gains: Vec<f64> = params
        .iter()
        .map(|p| p.internal_gain(weather.timestamp) + p.solar_aperture * weather.dni)
        .collect();

    let mut temps = state.temps.clone();
    let mut next = vec![0.0; n];
    let mut energy = vec![0.0; n];
    let mut coupling: Vec<f64> = Vec::with_capacity(8);
    for _ in 0..n_sub {
        for i in 0..n {
            let p = &params[i];
            let q_hvac = heater_power(temps[i], setpoints[i], p);
            // Summing sorted terms keeps the result independent of zone labelling.
            coupling.clear();
            coupling.extend(
                topology
                    .neighbors(i)
                    .iter()
                    .map(|&(j, r)| (temps[j] - temps[i]) / r),
            );
            coupling.sort_by(f64::total_cmp);
            let q_neighbors: f64 = coupling.iter().sum();
            let flow = (weather.t_out - temps[i]) / p.r_out + q_neighbors + q_hvac + gains[i];
            next[i] = temps[i] + h / p.capacitance * flow;
            energy[i] += q_hvac * h;
        }
        std::mem::swap(&mut temps, &mut next);
    }
    Ok(SimState {
        t: state.t + 1,
        temps,
        // the mean of saturated substeps can round past the limit
        heater_powers: energy
            .iter()
            .zip(params)
            .map(|(e, p)| (e / dt).clamp(0.0, p.heater_max))
            .collect(),
    })
}

/// A building instance that owns its state.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub topology: BuildingTopology,
    pub params: Vec<ZoneParams>,
    pub state: SimState,
    pub dt: f64,
}

impl Simulator {
    pub fn new(
        topology: BuildingTopology,
        params: Vec<ZoneParams>,
        initial_temp: f64,
        dt: f64,
    ) -> Result<Self, SimError> {
        if params.len() != topology.n_zones() {
            return Err(SimError::DimensionMismatch {
                what: "zone params",
                expected: topology.n_zones(),
                got: params.len(),
            });
        }
        for (i, p) in params.iter().enumerate() {
            p.validate(i)?;
        }
        if !(dt > 0.0) {
            return Err(SimError::NonPositiveTimestep(dt));
        }
        let state = SimState::uniform(topology.n_zones(), initial_temp);
        Ok(Self {
            topology,
            params,
            state,
            dt,
        })
    }

    pub fn from_config(config: &BuildingConfig, initial_temp: f64, dt: f64) -> Result<Self, SimError> {
        let (topology, params) = config.to_building()?;
        Self::new(topology, params, initial_temp, dt)
    }

    pub fn n_zones(&self) -> usize {
        self.topology.n_zones()
    }

    pub fn step(&mut self, setpoints: &[f64], weather: &WeatherRecord) -> Result<&SimState, SimError> {
        self.state = step(
            &self.state,
            setpoints,
            weather,
            self.dt,
            &self.topology,
            &self.params,
        )?;
        Ok(&self.state)
    }
}
