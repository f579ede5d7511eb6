//! A three-zone building with small trained models, for closed-loop tests.

use chrono::NaiveDate;
use dpn_core::control::{baseline_run, calibrate_p_max, daily_events, Scenario};
use dpn_core::data::{collect, excitation_schedule, synthetic_winter_weather, WeatherGenConfig};
use dpn_core::models::{train_rssm, train_ssm, SurrogateModel, TrainConfig};
use dpn_core::planners::DrEvent;
use dpn_core::sim::{BuildingConfig, Simulator};

pub const STEPS_PER_DAY: usize = 96;

pub struct Plant {
    pub scenario: Scenario,
    pub ssm: Vec<SurrogateModel>,
    pub rssm: Vec<SurrogateModel>,
}

pub fn small_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        d_s: 6,
        d_h: 8,
        n_lags: 4,
        head_hidden: 16,
        decoder_hidden: vec![16],
        horizon: 8,
        epochs: 12,
        windows_per_epoch: 512,
        val_windows: 0,
        seed,
        ..Default::default()
    }
}

/// Ten days of excitation for training, a short baseline warm-up, then one
/// controlled day starting at 04:00.
pub fn plant() -> Plant {
    let building = BuildingConfig::generate(1, 3, 7);
    let mut sim = Simulator::from_config(&building, 20.0, 900.0).unwrap();
    let start = NaiveDate::from_ymd_opt(2023, 1, 20).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let train_steps = 10 * STEPS_PER_DAY;
    let warm = 16;
    let weather = synthetic_winter_weather(start, train_steps + warm + 2 * STEPS_PER_DAY, 900.0, &WeatherGenConfig::default(), 5);
    let n = sim.n_zones();
    let schedule = excitation_schedule(n, train_steps, 9);
    let train = collect(&mut sim, &schedule, &weather[..train_steps]).unwrap();
    let mut history = collect(&mut sim, &vec![vec![21.0; warm]; n], &weather[train_steps..train_steps + warm]).unwrap();
    history.stats = train.stats;
    let rest = weather[train_steps + warm..].to_vec();

    let cfg = small_train_config(1);
    let ssm = (0..n)
        .map(|z| SurrogateModel::Ssm(train_ssm(&train, None, z, &cfg).unwrap().model))
        .collect();
    let rssm = (0..n)
        .map(|z| SurrogateModel::Rssm(train_rssm(&train, None, z, &cfg).unwrap().model))
        .collect();
    Plant {
        scenario: Scenario {
            sim,
            history,
            baseline: vec![vec![21.0; n]; rest.len()],
            weather: rest,
            events: Vec::new(),
            n_steps: STEPS_PER_DAY,
        },
        ssm,
        rssm,
    }
}

fn windows(scenario: &Scenario) -> Vec<DrEvent> {
    let stamps: Vec<_> = scenario.weather[..scenario.n_steps].iter().map(|w| w.timestamp).collect();
    daily_events(&stamps, 6, 9, 1.0)
}

/// Morning events with a cap `reduction` below the baseline peak.
pub fn morning_events(scenario: &Scenario, reduction: f64) -> Vec<DrEvent> {
    let events = windows(scenario);
    let base = baseline_run(scenario).unwrap();
    calibrate_p_max(&base, &events, reduction).unwrap().apply(&events)
}

/// Morning events with a cap of `factor` times the baseline peak.
pub fn morning_events_scaled(scenario: &Scenario, factor: f64) -> Vec<DrEvent> {
    let events = windows(scenario);
    let base = baseline_run(scenario).unwrap();
    let peak = calibrate_p_max(&base, &events, 0.0).unwrap().p_max;
    events.iter().map(|e| DrEvent::constant(e.start, e.end, factor * peak)).collect()
}
