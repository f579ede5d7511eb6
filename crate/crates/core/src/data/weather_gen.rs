use std::f64::consts::{PI, TAU};

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::sim::WeatherRecord;

/// Parameters of the synthetic cold-climate weather generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherGenConfig {
    /// Daily mean outdoor temperature at the coldest point of the year, °C.
    pub coldest_mean: f64,
    /// Rise of the daily mean from the coldest point to mid-summer, °C.
    pub seasonal_swing: f64,
    /// Day of year of the coldest daily mean.
    pub coldest_day: f64,
    /// Stationary std of the multi-day anomaly, °C.
    pub synoptic_std: f64,
    /// Correlation time of the multi-day anomaly, hours.
    pub synoptic_tau_h: f64,
    /// Half the peak-to-trough diurnal swing on a clear day, °C.
    pub diurnal_amplitude: f64,
    /// Hour of the daily minimum.
    pub min_hour: f64,
    /// Hour of the daily maximum.
    pub max_hour: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub latitude_deg: f64,
    /// Clear-sky DNI at zero air mass, W/m².
    pub solar_constant: f64,
}

impl Default for WeatherGenConfig {
    fn default() -> Self {
        Self {
            coldest_mean: -10.0,
            seasonal_swing: 30.0,
            coldest_day: 22.0,
            synoptic_std: 5.0,
            synoptic_tau_h: 72.0,
            diurnal_amplitude: 3.5,
            min_hour: 6.5,
            max_hour: 15.0,
            t_min: -25.0,
            t_max: 5.0,
            latitude_deg: 45.5,
            solar_constant: 1000.0,
        }
    }
}

/// Stationary Ornstein-Uhlenbeck process sampled at a fixed step.
struct Ou {
    x: f64,
    decay: f64,
    noise: f64,
}

impl Ou {
    fn new(std: f64, tau_s: f64, dt_s: f64, rng: &mut ChaCha8Rng) -> Self {
        let decay = (-dt_s / tau_s).exp();
        let z: f64 = StandardNormal.sample(rng);
        Self {
            x: std * z,
            decay,
            noise: std * (1.0 - decay * decay).sqrt(),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.x = self.decay * self.x + self.noise * z;
        self.x
    }
}

/// Diurnal shape in [-1, 1]: -1 at `min_h`, +1 at `max_h`, half-cosine
/// segments in between.
fn diurnal_shape(hour: f64, min_h: f64, max_h: f64) -> f64 {
    let rise = max_h - min_h;
    let since_min = (hour - min_h).rem_euclid(24.0);
    if since_min <= rise {
        -(PI * since_min / rise).cos()
    } else {
        (PI * (since_min - rise) / (24.0 - rise)).cos()
    }
}

/// Sine of the solar elevation angle, from day of year and local solar time.
fn sin_elevation(day_of_year: f64, hour: f64, latitude_deg: f64) -> f64 {
    let decl = (23.44f64).to_radians() * (TAU * (284.0 + day_of_year) / 365.0).sin();
    let lat = latitude_deg.to_radians();
    let hour_angle = (15.0 * (hour - 12.0)).to_radians();
    lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos()
}

/// A synthetic weather trace starting at `start`, one record per `dt_s`.
/// Temperatures follow a seasonal mean plus a multi-day anomaly and a diurnal
/// cycle that is damped under cloud; DNI is a clear-sky envelope scaled by
/// cloud cover.
pub fn synthetic_winter_weather(
    start: NaiveDateTime,
    n_steps: usize,
    dt_s: f64,
    config: &WeatherGenConfig,
    seed: u64,
) -> Vec<WeatherRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut synoptic = Ou::new(config.synoptic_std, config.synoptic_tau_h * 3600.0, dt_s, &mut rng);
    let mut fast = Ou::new(0.4, 2.0 * 3600.0, dt_s, &mut rng);
    let mut cloud = Ou::new(1.0, 18.0 * 3600.0, dt_s, &mut rng);
    let mut humid = Ou::new(6.0, 12.0 * 3600.0, dt_s, &mut rng);
    let step = Duration::milliseconds((dt_s * 1000.0).round() as i64);

    let mut out = Vec::with_capacity(n_steps);
    let mut t = start;
    for _ in 0..n_steps {
        let doy = t.ordinal() as f64;
        let hour = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;

        // cloud cover in [0, 1] from a latent Gaussian
        let cover = 1.0 / (1.0 + (-1.5 * cloud.next(&mut rng)).exp());
        let clearness = 1.0 - 0.9 * cover;

        let seasonal = config.coldest_mean
            + config.seasonal_swing * 0.5 * (1.0 - (TAU * (doy - config.coldest_day) / 365.0).cos());
        let diurnal = config.diurnal_amplitude
            * (0.4 + 0.6 * clearness)
            * diurnal_shape(hour, config.min_hour, config.max_hour);
        let t_out = (seasonal + synoptic.next(&mut rng) + diurnal + fast.next(&mut rng))
            .clamp(config.t_min, config.t_max);

        let rh = (72.0 + 10.0 * cover - 5.0 * diurnal_shape(hour, config.min_hour, config.max_hour)
            + humid.next(&mut rng))
        .clamp(35.0, 100.0);

        let sin_el = sin_elevation(doy, hour, config.latitude_deg);
        let dni = if sin_el > 0.02 {
            config.solar_constant * (-0.15 / sin_el).exp() * clearness
        } else {
            0.0
        };

        out.push(WeatherRecord {
            timestamp: t,
            t_out,
            rh,
            dni,
        });
        t += step;
    }
    out
}
