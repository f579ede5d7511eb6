//! Dataset construction for the zone models.
//!
//! Rollouts of the simulator under excitation schedules are recorded as
//! per-zone observation/action sequences plus a building-wide disturbance
//! sequence. Features are z-score normalized with statistics shared across
//! zones and computed on the training partition only.

mod calendar;
mod excitation;
mod io;
mod protocol;
pub mod toy;
mod weather_gen;

pub use calendar::{encode_day_of_week, encode_hour, MonthLabel};
pub use excitation::excitation_schedule;
pub use protocol::{collect_protocol, protocol_splits, ProtocolConfig};
pub use io::{read_dataset_dir, write_dataset_dir};
pub use weather_gen::{synthetic_winter_weather, WeatherGenConfig};

use chrono::{Datelike, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{SimError, Simulator, WeatherRecord};

/// Width of the disturbance feature vector fed to the models.
pub const DIST_DIM: usize = 7;
/// Width of the observation feature vector (temperature, power).
pub const OBS_DIM: usize = 2;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty partition: {0}")]
    EmptyPartition(String),
    #[error("overlapping partitions: month {0} appears twice")]
    OverlappingPartitions(MonthLabel),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// °C, at the end of the timestep.
    pub zone_temp: f64,
    /// Mean heater power over the timestep, W.
    pub hvac_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub t_out: f64,
    pub rh: f64,
    pub dni: f64,
    pub hour_sin: f64,
    pub hour_cos: f64,
    pub dow_sin: f64,
    pub dow_cos: f64,
}

impl Disturbance {
    pub fn from_weather(w: &WeatherRecord) -> Self {
        let (hour_sin, hour_cos) = encode_hour(w.timestamp);
        let (dow_sin, dow_cos) = encode_day_of_week(w.timestamp);
        Self {
            t_out: w.t_out,
            rh: w.rh,
            dni: w.dni,
            hour_sin,
            hour_cos,
            dow_sin,
            dow_cos,
        }
    }
}

/// Absolute heating setpoint commanded to a zone tracker, °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub setpoint: f64,
}

impl Action {
    pub const MIN_SETPOINT: f64 = 10.0;
    pub const MAX_SETPOINT: f64 = 30.0;

    pub fn is_sane(&self) -> bool {
        (Self::MIN_SETPOINT..=Self::MAX_SETPOINT).contains(&self.setpoint)
    }
}

/// Mean and standard deviation of one scalar feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

impl FeatureStats {
    pub const IDENTITY: Self = Self { mean: 0.0, std: 1.0 };

    fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            sum += v;
            sum_sq += v * v;
        }
        if n == 0 {
            return Self::IDENTITY;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        // constant features normalize to zero either way
        let std = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-feature normalization statistics, shared by all zones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub zone_temp: FeatureStats,
    pub hvac_power: FeatureStats,
    pub setpoint: FeatureStats,
    pub t_out: FeatureStats,
    pub rh: FeatureStats,
    pub dni: FeatureStats,
}

impl Default for NormStats {
    fn default() -> Self {
        Self {
            zone_temp: FeatureStats::IDENTITY,
            hvac_power: FeatureStats::IDENTITY,
            setpoint: FeatureStats::IDENTITY,
            t_out: FeatureStats::IDENTITY,
            rh: FeatureStats::IDENTITY,
            dni: FeatureStats::IDENTITY,
        }
    }
}

impl NormStats {
    pub fn observation(&self, o: &Observation) -> [f64; OBS_DIM] {
        [
            self.zone_temp.normalize(o.zone_temp),
            self.hvac_power.normalize(o.hvac_power),
        ]
    }

    pub fn action(&self, setpoint: f64) -> f64 {
        self.setpoint.normalize(setpoint)
    }

    pub fn disturbance(&self, d: &Disturbance) -> [f64; DIST_DIM] {
        [
            self.t_out.normalize(d.t_out),
            self.rh.normalize(d.rh),
            self.dni.normalize(d.dni),
            d.hour_sin,
            d.hour_cos,
            d.dow_sin,
            d.dow_cos,
        ]
    }

    /// Power in the units used by the coordinator: watts over the power std.
    pub fn power_scale(&self) -> f64 {
        self.hvac_power.std
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ZoneSeries {
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
}

/// Aligned per-zone records. Row `k` holds the setpoint applied during step
/// `k`, the disturbance at its start and the resulting observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dt_s: f64,
    pub timestamps: Vec<NaiveDateTime>,
    pub disturbances: Vec<Disturbance>,
    pub zones: Vec<ZoneSeries>,
    pub stats: NormStats,
}

impl Dataset {
    pub fn empty(n_zones: usize, dt_s: f64) -> Self {
        Self {
            dt_s,
            timestamps: Vec::new(),
            disturbances: Vec::new(),
            zones: vec![ZoneSeries::default(); n_zones],
            stats: NormStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_zones(&self) -> usize {
        self.zones.len()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.len();
        if self.disturbances.len() != n {
            return Err(DataError::LengthMismatch(format!(
                "{} disturbances for {} timestamps",
                self.disturbances.len(),
                n
            )));
        }
        for (i, z) in self.zones.iter().enumerate() {
            if z.observations.len() != n || z.actions.len() != n {
                return Err(DataError::LengthMismatch(format!(
                    "zone {i}: {} observations, {} actions for {} timestamps",
                    z.observations.len(),
                    z.actions.len(),
                    n
                )));
            }
        }
        Ok(())
    }

    /// Statistics over every row and zone of this dataset.
    pub fn compute_stats(&self) -> NormStats {
        let obs = || self.zones.iter().flat_map(|z| z.observations.iter());
        NormStats {
            zone_temp: FeatureStats::from_values(obs().map(|o| o.zone_temp)),
            hvac_power: FeatureStats::from_values(obs().map(|o| o.hvac_power)),
            setpoint: FeatureStats::from_values(
                self.zones.iter().flat_map(|z| z.actions.iter().map(|a| a.setpoint)),
            ),
            t_out: FeatureStats::from_values(self.disturbances.iter().map(|d| d.t_out)),
            rh: FeatureStats::from_values(self.disturbances.iter().map(|d| d.rh)),
            dni: FeatureStats::from_values(self.disturbances.iter().map(|d| d.dni)),
        }
    }

    /// Rows whose timestamps satisfy `keep`, with stats left unchanged.
    pub fn filter_rows(&self, keep: impl Fn(NaiveDateTime) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&k| keep(self.timestamps[k])).collect();
        self.select_rows(&idx)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            dt_s: self.dt_s,
            timestamps: idx.iter().map(|&k| self.timestamps[k]).collect(),
            disturbances: idx.iter().map(|&k| self.disturbances[k]).collect(),
            zones: self
                .zones
                .iter()
                .map(|z| ZoneSeries {
                    observations: idx.iter().map(|&k| z.observations[k]).collect(),
                    actions: idx.iter().map(|&k| z.actions[k]).collect(),
                })
                .collect(),
            stats: self.stats,
        }
    }

    /// Appends the rows of `other`; stats of `self` are kept.
    pub fn extend(&mut self, other: &Dataset) -> Result<(), DataError> {
        if other.n_zones() != self.n_zones() {
            return Err(DataError::LengthMismatch(format!(
                "cannot append {} zones to {}",
                other.n_zones(),
                self.n_zones()
            )));
        }
        self.timestamps.extend_from_slice(&other.timestamps);
        self.disturbances.extend_from_slice(&other.disturbances);
        for (a, b) in self.zones.iter_mut().zip(&other.zones) {
            a.observations.extend_from_slice(&b.observations);
            a.actions.extend_from_slice(&b.actions);
        }
        Ok(())
    }

    /// True when rows `from..to` are consecutive simulation timesteps.
    pub fn is_contiguous(&self, from: usize, to: usize) -> bool {
        let step = chrono::Duration::milliseconds((self.dt_s * 1000.0).round() as i64);
        (from + 1..to).all(|k| self.timestamps[k] - self.timestamps[k - 1] == step)
    }

    /// Indices `k` of the first predicted row of every window with `n_lags`
    /// history rows before it and `horizon` rows from it, all contiguous.
    pub fn window_starts(&self, n_lags: usize, horizon: usize) -> Vec<usize> {
        let n = self.len();
        if n < n_lags + horizon {
            return Vec::new();
        }
        // length of the contiguous run ending at each row
        let mut run = vec![1usize; n];
        let step = chrono::Duration::milliseconds((self.dt_s * 1000.0).round() as i64);
        for k in 1..n {
            if self.timestamps[k] - self.timestamps[k - 1] == step {
                run[k] = run[k - 1] + 1;
            }
        }
        (n_lags..=n - horizon)
            .filter(|&k| run[k + horizon - 1] >= n_lags + horizon)
            .collect()
    }

    pub fn month_labels(&self) -> Vec<MonthLabel> {
        let mut labels: Vec<MonthLabel> = self.timestamps.iter().map(|t| MonthLabel::of(*t)).collect();
        labels.dedup();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Building power (sum over zones) at row `k`, W.
    pub fn building_power(&self, k: usize) -> f64 {
        self.zones.iter().map(|z| z.observations[k].hvac_power).sum()
    }
}

/// Steps the simulator through `weather`, applying `schedule[zone][k]` at row
/// `k`, and records every zone. Statistics cover the whole collected set.
pub fn collect(
    sim: &mut Simulator,
    schedule: &[Vec<f64>],
    weather: &[WeatherRecord],
) -> Result<Dataset, DataError> {
    let n_zones = sim.n_zones();
    if schedule.len() != n_zones {
        return Err(DataError::LengthMismatch(format!(
            "schedule has {} zones, simulator has {}",
            schedule.len(),
            n_zones
        )));
    }
    for (i, s) in schedule.iter().enumerate() {
        if s.len() != weather.len() {
            return Err(DataError::LengthMismatch(format!(
                "zone {i} schedule covers {} steps, weather covers {}",
                s.len(),
                weather.len()
            )));
        }
    }
    let mut data = Dataset::empty(n_zones, sim.dt);
    let mut setpoints = vec![0.0; n_zones];
    for (k, w) in weather.iter().enumerate() {
        for (i, s) in schedule.iter().enumerate() {
            setpoints[i] = s[k];
        }
        let state = sim.step(&setpoints, w)?;
        data.timestamps.push(w.timestamp);
        data.disturbances.push(Disturbance::from_weather(w));
        for (i, zone) in data.zones.iter_mut().enumerate() {
            zone.observations.push(Observation {
                zone_temp: state.temps[i],
                hvac_power: state.heater_powers[i],
            });
            zone.actions.push(Action {
                setpoint: setpoints[i],
            });
        }
    }
    data.stats = data.compute_stats();
    Ok(data)
}

/// Chronological split by calendar month. Statistics are recomputed on the
/// training partition and copied to validation and test.
pub fn split(
    dataset: &Dataset,
    train_months: &[MonthLabel],
    val_month: MonthLabel,
    test_month: MonthLabel,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let mut seen = std::collections::BTreeSet::new();
    for m in train_months.iter().chain([&val_month, &test_month]) {
        if !seen.insert(*m) {
            return Err(DataError::OverlappingPartitions(*m));
        }
    }
    let in_train = |t: NaiveDateTime| train_months.contains(&MonthLabel::of(t));
    let mut train = dataset.filter_rows(in_train);
    let mut val = dataset.filter_rows(|t| MonthLabel::of(t) == val_month);
    let mut test = dataset.filter_rows(|t| MonthLabel::of(t) == test_month);
    for (name, part) in [("train", &train), ("validation", &val), ("test", &test)] {
        if part.is_empty() {
            return Err(DataError::EmptyPartition(name.to_string()));
        }
    }
    let stats = train.compute_stats();
    train.stats = stats;
    val.stats = stats;
    test.stats = stats;
    Ok((train, val, test))
}

/// Number of days in the month of `t`.
pub fn days_in_month(t: NaiveDateTime) -> u32 {
    let (y, m) = (t.year(), t.month());
    let (ny, nm) = if m == 12 { (y + 1, 1) } else { (y, m + 1) };
    let first_next = chrono::NaiveDate::from_ymd_opt(ny, nm, 1).expect("valid date");
    let first = chrono::NaiveDate::from_ymd_opt(y, m, 1).expect("valid date");
    (first_next - first).num_days() as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{default_building, Simulator};
    use chrono::NaiveDate;

    fn small_sim() -> Simulator {
        let (topo, params) = default_building(1, 2, 1);
        Simulator::new(topo, params, 20.0, 900.0).unwrap()
    }

    fn weather(start: NaiveDateTime, n: usize) -> Vec<WeatherRecord> {
        synthetic_winter_weather(start, n, 900.0, &WeatherGenConfig::default(), 3)
    }

    fn jan1() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2023, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    #[test]
    fn empty_schedule_gives_empty_dataset() {
        let mut sim = small_sim();
        let data = collect(&mut sim, &[vec![], vec![]], &[]).unwrap();
        assert!(data.is_empty());
        assert_eq!(data.n_zones(), 2);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut sim = small_sim();
        let w = weather(jan1(), 10);
        assert!(collect(&mut sim, &[vec![20.0; 10], vec![20.0; 9]], &w).is_err());
        assert!(collect(&mut sim, &[vec![20.0; 10]], &w).is_err());
    }

    #[test]
    fn low_setpoints_record_zero_power() {
        let mut sim = small_sim();
        // ten hours is too short for the zones to cool from 20 to 10 °C
        let w = weather(jan1(), 40);
        let data = collect(&mut sim, &[vec![10.0; 40], vec![10.0; 40]], &w).unwrap();
        for z in &data.zones {
            assert!(z.observations.iter().all(|o| o.hvac_power == 0.0));
        }
    }

    #[test]
    fn collection_is_deterministic() {
        let w = weather(jan1(), 500);
        let schedule = excitation_schedule(2, 500, 4);
        let a = collect(&mut small_sim(), &schedule, &w).unwrap();
        let b = collect(&mut small_sim(), &schedule, &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_by_month_with_train_stats() {
        let mut sim = small_sim();
        // Nov 2022 .. Jun 2023: eight months
        let start = NaiveDate::from_ymd_opt(2022, 11, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let end = NaiveDate::from_ymd_opt(2023, 7, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let n = ((end - start).num_minutes() / 15) as usize;
        let w = weather(start, n);
        let schedule = excitation_schedule(2, n, 9);
        let data = collect(&mut sim, &schedule, &w).unwrap();
        assert_eq!(data.month_labels().len(), 8);

        let m = |y, mo| MonthLabel::new(y, mo);
        let train_months = [m(2022, 11), m(2022, 12), m(2023, 1), m(2023, 2), m(2023, 3), m(2023, 4)];
        let (train, val, test) = split(&data, &train_months, m(2023, 5), m(2023, 6)).unwrap();

        // independent row count per calendar month
        let rows_in = |y: i32, mo: u32| {
            let first = NaiveDate::from_ymd_opt(y, mo, 1).unwrap();
            let next = if mo == 12 {
                NaiveDate::from_ymd_opt(y + 1, 1, 1).unwrap()
            } else {
                NaiveDate::from_ymd_opt(y, mo + 1, 1).unwrap()
            };
            ((next - first).num_days() * 96) as usize
        };
        let expected_train: usize = train_months.iter().map(|l| rows_in(l.year, l.month)).sum();
        assert_eq!(train.len(), expected_train);
        assert_eq!(val.len(), rows_in(2023, 5));
        assert_eq!(test.len(), rows_in(2023, 6));
        assert_eq!(train.len() + val.len() + test.len(), data.len());

        let mut all: Vec<_> = train.timestamps.iter().chain(&val.timestamps).chain(&test.timestamps).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), data.len());

        assert_eq!(val.stats, train.stats);
        assert_eq!(test.stats, train.stats);
        assert_eq!(train.stats, train.compute_stats());

        assert!(matches!(
            split(&data, &train_months, m(2023, 5), m(2023, 5)),
            Err(DataError::OverlappingPartitions(_))
        ));
        assert!(matches!(
            split(&data, &train_months, m(2023, 5), m(2024, 1)),
            Err(DataError::EmptyPartition(_))
        ));
    }

    #[test]
    fn windows_skip_gaps() {
        let mut sim = small_sim();
        let mut w = weather(jan1(), 40);
        // drop four rows to open a gap
        w.drain(20..24);
        let schedule = excitation_schedule(2, w.len(), 1);
        let data = collect(&mut sim, &schedule, &w).unwrap();
        let starts = data.window_starts(4, 4);
        for &k in &starts {
            assert!(data.is_contiguous(k - 4, k + 4));
        }
        assert!(starts.contains(&4));
        assert!(!starts.contains(&18));
        assert!(starts.contains(&24));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalization_round_trips(x in -1.0e5f64..1.0e5, mean in -100.0f64..100.0, std in 1e-3f64..1e4) {
                let s = FeatureStats { mean, std };
                let back = s.denormalize(s.normalize(x));
                prop_assert!((back - x).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}
