//! A single-zone linear system with known dynamics, for model sanity checks.

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{excitation_schedule, Action, Dataset, Disturbance, Observation, ZoneSeries};
use crate::sim::WeatherRecord;

/// Coefficients of the toy system:
/// `T' = T + a (sp - T) + b (t_out - T)` and
/// `P = p0 + p1 (sp - T) + p2 (T - t_out)`.
#[derive(Debug, Clone, Copy)]
pub struct ToyCoefficients {
    pub a: f64,
    pub b: f64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Default for ToyCoefficients {
    fn default() -> Self {
        Self {
            a: 0.2,
            b: 0.03,
            p0: 500.0,
            p1: 400.0,
            p2: 40.0,
        }
    }
}

/// Simulates the toy zone for `n_steps` under a random excitation schedule
/// and smooth sinusoidal outdoor temperature. `noise_std` adds Gaussian
/// noise to the recorded temperature (°C) and, scaled by 50, to power.
pub fn linear_zone(n_steps: usize, noise_std: f64, seed: u64) -> Dataset {
    let coef = ToyCoefficients::default();
    let schedule = excitation_schedule(1, n_steps, seed).remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70f);
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    let start = NaiveDate::from_ymd_opt(2021, 1, 4)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time");

    let mut data = Dataset::empty(1, 900.0);
    let mut series = ZoneSeries::default();
    let mut temp = 20.0;
    for (k, &sp) in schedule.iter().enumerate() {
        let ts = start + Duration::minutes(15 * k as i64);
        let day = k as f64 / 96.0;
        let t_out = -8.0 + 5.0 * (std::f64::consts::TAU * day).sin() + 3.0 * (0.37 * day).sin();
        let power = coef.p0 + coef.p1 * (sp - temp) + coef.p2 * (temp - t_out);
        temp += coef.a * (sp - temp) + coef.b * (t_out - temp);
        let weather = WeatherRecord {
            timestamp: ts,
            t_out,
            rh: 70.0,
            dni: 0.0,
        };
        data.timestamps.push(ts);
        data.disturbances.push(Disturbance::from_weather(&weather));
        series.observations.push(Observation {
            zone_temp: temp + noise.sample(&mut rng),
            hvac_power: power + 50.0 * noise.sample(&mut rng),
        });
        series.actions.push(Action { setpoint: sp });
    }
    data.zones = vec![series];
    data.stats = data.compute_stats();
    data
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_toy_obeys_its_recurrence() {
        let d = linear_zone(500, 0.0, 3);
        let c = ToyCoefficients::default();
        let z = &d.zones[0];
        for k in 1..d.len() {
            let prev = z.observations[k - 1].zone_temp;
            let sp = z.actions[k].setpoint;
            let t_out = d.disturbances[k].t_out;
            let next = prev + c.a * (sp - prev) + c.b * (t_out - prev);
            assert!((z.observations[k].zone_temp - next).abs() < 1e-9);
        }
        assert!(d.is_contiguous(0, d.len()));
    }
}
