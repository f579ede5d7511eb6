//! The standard winter data-collection protocol: three collection blocks
//! (two three-month winters for training, then January and February of the
//! following year), one continuous simulator run across them.

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{collect, excitation_schedule, split, synthetic_winter_weather, DataError, Dataset, MonthLabel, WeatherGenConfig};
use crate::sim::{BuildingConfig, Simulator, WeatherRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    pub n_floors: usize,
    pub zones_per_floor: usize,
    pub building_seed: u64,
    pub weather_seed: u64,
    pub excitation_seed: u64,
    pub dt_s: f64,
    pub initial_temp: f64,
    pub train_months: Vec<MonthLabel>,
    pub val_month: MonthLabel,
    pub test_month: MonthLabel,
    pub weather: WeatherGenConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let m = MonthLabel::new;
        Self {
            n_floors: 3,
            zones_per_floor: 6,
            building_seed: 0,
            weather_seed: 0,
            excitation_seed: 0,
            dt_s: 900.0,
            initial_temp: 20.0,
            train_months: vec![m(2021, 1), m(2021, 2), m(2021, 3), m(2022, 1), m(2022, 2), m(2022, 3)],
            val_month: m(2023, 1),
            test_month: m(2023, 2),
            weather: WeatherGenConfig::default(),
        }
    }
}

fn month_start(m: MonthLabel) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(m.year, m.month, 1)
        .expect("valid month label")
        .and_hms_opt(0, 0, 0)
        .expect("midnight")
}

fn next_month(m: MonthLabel) -> MonthLabel {
    if m.month == 12 {
        MonthLabel::new(m.year + 1, 1)
    } else {
        MonthLabel::new(m.year, m.month + 1)
    }
}

impl ProtocolConfig {
    pub fn building(&self) -> BuildingConfig {
        BuildingConfig::generate(self.n_floors, self.zones_per_floor, self.building_seed)
    }

    /// All months of the protocol in calendar order.
    pub fn months(&self) -> Vec<MonthLabel> {
        let mut all: Vec<MonthLabel> = self.train_months.clone();
        all.push(self.val_month);
        all.push(self.test_month);
        all.sort();
        all.dedup();
        all
    }

    /// Weather for every month, consecutive months sharing one trace.
    pub fn weather_trace(&self) -> Vec<WeatherRecord> {
        let months = self.months();
        let mut out = Vec::new();
        let mut i = 0;
        let mut block = 0u64;
        while i < months.len() {
            let mut j = i;
            while j + 1 < months.len() && months[j + 1] == next_month(months[j]) {
                j += 1;
            }
            let start = month_start(months[i]);
            let end = month_start(next_month(months[j]));
            let steps = ((end - start).num_seconds() as f64 / self.dt_s).round() as usize;
            out.extend(synthetic_winter_weather(
                start,
                steps,
                self.dt_s,
                &self.weather,
                self.weather_seed.wrapping_mul(1000).wrapping_add(block),
            ));
            block += 1;
            i = j + 1;
        }
        out
    }
}

/// Collects the full protocol dataset under random excitation.
pub fn collect_protocol(cfg: &ProtocolConfig) -> Result<Dataset, DataError> {
    let mut sim = Simulator::from_config(&cfg.building(), cfg.initial_temp, cfg.dt_s)?;
    let weather = cfg.weather_trace();
    let schedule = excitation_schedule(sim.n_zones(), weather.len(), cfg.excitation_seed);
    collect(&mut sim, &schedule, &weather)
}

/// Collects and splits the protocol dataset into train, validation and test.
pub fn protocol_splits(cfg: &ProtocolConfig) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let data = collect_protocol(cfg)?;
    split(&data, &cfg.train_months, cfg.val_month, cfg.test_month)
}
