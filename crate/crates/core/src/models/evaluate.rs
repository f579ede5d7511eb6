use serde::{Deserialize, Serialize};

use super::{ModelError, SurrogateModel, ZoneHistory};
use crate::data::Dataset;

/// Building power below this level (W) is excluded from percentage errors.
pub const MAPE_MIN_POWER_W: f64 = 100.0;

/// Anything that predicts a zone's power from the rows before an origin.
pub trait PowerForecaster {
    /// History rows needed before the origin.
    fn n_lags(&self) -> usize;

    /// Predicted power (W) of `zone` for rows `origin..origin + horizon`,
    /// using recorded setpoints and disturbances over those rows.
    fn forecast(&self, data: &Dataset, zone: usize, origin: usize, horizon: usize) -> Result<Vec<f64>, ModelError>;
}

/// One model per zone. Stochastic models are scored on the mean of
/// `rssm_samples` sampled trajectories.
#[derive(Debug, Clone)]
pub struct ZoneModels {
    pub models: Vec<SurrogateModel>,
    pub rssm_samples: usize,
    pub seed: u64,
}

impl ZoneModels {
    pub fn new(models: Vec<SurrogateModel>) -> Self {
        Self {
            models,
            rssm_samples: 30,
            seed: 0,
        }
    }
}

impl PowerForecaster for ZoneModels {
    fn n_lags(&self) -> usize {
        self.models.iter().map(|m| m.n_lags()).max().unwrap_or(0)
    }

    fn forecast(&self, data: &Dataset, zone: usize, origin: usize, horizon: usize) -> Result<Vec<f64>, ModelError> {
        let model = self
            .models
            .get(zone)
            .ok_or_else(|| ModelError::Shape(format!("no model for zone {zone}")))?;
        let lags = model.n_lags();
        if origin < lags || origin + horizon > data.len() {
            return Err(ModelError::HorizonTooLong { horizon });
        }
        let history = ZoneHistory::from_dataset(data, zone, origin - lags, origin);
        let future = origin..origin + horizon;
        let setpoints: Vec<f64> = data.zones[zone].actions[future.clone()]
            .iter()
            .map(|a| a.setpoint)
            .collect();
        let dists = &data.disturbances[future];
        match model {
            SurrogateModel::Ssm(m) => Ok(m.rollout(&m.encode(&history)?, &setpoints, dists)?.powers),
            SurrogateModel::Rssm(m) => {
                let state = m.filter(&history)?;
                let seed = self.seed ^ ((origin as u64) << 8) ^ zone as u64;
                let samples = m.rollout_samples_seeded(&state, &setpoints, dists, self.rssm_samples.max(1), seed)?;
                let n = samples.len() as f64;
                Ok((0..horizon)
                    .map(|k| samples.iter().map(|t| t[k]).sum::<f64>() / n)
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    /// Mean absolute power error per zone, W.
    pub zone_mae: Vec<f64>,
    /// Mean absolute percentage error of building power, %.
    pub building_mape: f64,
    pub n_origins: usize,
    /// Timesteps excluded by the low-power guard.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub horizons: Vec<HorizonMetrics>,
}

impl EvalReport {
    pub fn at(&self, horizon: usize) -> Option<&HorizonMetrics> {
        self.horizons.iter().find(|h| h.horizon == horizon)
    }
}

/// Rolling-origin evaluation. From every `origin_stride`-th valid origin a
/// single rollout of the longest horizon is made; horizon `h` scores its
/// first `h` steps.
pub fn evaluate_model(
    model: &dyn PowerForecaster,
    data: &Dataset,
    horizons: &[usize],
    origin_stride: usize,
) -> Result<EvalReport, ModelError> {
    let max_h = horizons.iter().copied().max().unwrap_or(0);
    if max_h == 0 {
        return Ok(EvalReport { horizons: Vec::new() });
    }
    let origins: Vec<usize> = data
        .window_starts(model.n_lags(), max_h)
        .into_iter()
        .step_by(origin_stride.max(1))
        .collect();
    if origins.is_empty() {
        return Err(ModelError::HorizonTooLong { horizon: max_h });
    }
    let n_zones = data.n_zones();
    let mut abs_err = vec![vec![vec![0.0; max_h]; n_zones]; origins.len()];
    let mut pct_err = vec![vec![None; max_h]; origins.len()];
    for (o, &origin) in origins.iter().enumerate() {
        let mut pred_total = vec![0.0; max_h];
        for zone in 0..n_zones {
            let pred = model.forecast(data, zone, origin, max_h)?;
            for k in 0..max_h {
                let truth = data.zones[zone].observations[origin + k].hvac_power;
                abs_err[o][zone][k] = (pred[k] - truth).abs();
                pred_total[k] += pred[k];
            }
        }
        for k in 0..max_h {
            let truth = data.building_power(origin + k);
            if truth >= MAPE_MIN_POWER_W {
                pct_err[o][k] = Some(100.0 * (pred_total[k] - truth).abs() / truth);
            }
        }
    }

    let mut out = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let zone_mae = (0..n_zones)
            .map(|z| {
                let s: f64 = abs_err.iter().map(|e| e[z][..h].iter().sum::<f64>()).sum();
                s / (origins.len() * h) as f64
            })
            .collect();
        let kept: Vec<f64> = pct_err.iter().flat_map(|p| p[..h].iter().flatten().copied()).collect();
        let skipped = origins.len() * h - kept.len();
        let building_mape = if kept.is_empty() {
            f64::NAN
        } else {
            kept.iter().sum::<f64>() / kept.len() as f64
        };
        out.push(HorizonMetrics {
            horizon: h,
            zone_mae,
            building_mape,
            n_origins: origins.len(),
            skipped,
        });
    }
    Ok(EvalReport { horizons: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{collect, excitation_schedule, synthetic_winter_weather, WeatherGenConfig};
    use crate::sim::{default_building, Simulator};
    use chrono::NaiveDate;

    struct Oracle;
    impl PowerForecaster for Oracle {
        fn n_lags(&self) -> usize {
            2
        }
        fn forecast(&self, d: &Dataset, zone: usize, origin: usize, h: usize) -> Result<Vec<f64>, ModelError> {
            Ok((origin..origin + h).map(|k| d.zones[zone].observations[k].hvac_power).collect())
        }
    }

    struct Zero;
    impl PowerForecaster for Zero {
        fn n_lags(&self) -> usize {
            2
        }
        fn forecast(&self, _: &Dataset, _: usize, _: usize, h: usize) -> Result<Vec<f64>, ModelError> {
            Ok(vec![0.0; h])
        }
    }

    fn data() -> Dataset {
        let (topo, params) = default_building(1, 3, 4);
        let mut sim = Simulator::new(topo, params, 20.0, 900.0).unwrap();
        let start = NaiveDate::from_ymd_opt(2023, 2, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let w = synthetic_winter_weather(start, 400, 900.0, &WeatherGenConfig::default(), 2);
        collect(&mut sim, &excitation_schedule(3, 400, 2), &w).unwrap()
    }

    #[test]
    fn oracle_scores_zero() {
        let r = evaluate_model(&Oracle, &data(), &[4, 8, 16], 3).unwrap();
        for h in &r.horizons {
            assert_eq!(h.building_mape, 0.0);
            assert!(h.zone_mae.iter().all(|&e| e == 0.0));
        }
    }

    #[test]
    fn zero_predictor_scores_hundred_percent() {
        let r = evaluate_model(&Zero, &data(), &[4], 1).unwrap();
        assert!((r.at(4).unwrap().building_mape - 100.0).abs() < 1e-9);
    }

    #[test]
    fn horizon_longer_than_data_is_an_error() {
        let d = data();
        assert!(matches!(
            evaluate_model(&Oracle, &d, &[d.len()], 1),
            Err(ModelError::HorizonTooLong { .. })
        ));
    }
}
