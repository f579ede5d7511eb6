use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BuildingTopology, SimError, ZoneParams, HOURS_PER_WEEK};

const NOMINAL_CAPACITANCE: f64 = 1.0e7;
const NOMINAL_R_OUT: f64 = 0.012;
const MIDDLE_FLOOR_R_OUT_FACTOR: f64 = 1.6;
const NOMINAL_HEATER_MAX: f64 = 6000.0;
const NOMINAL_TRACKER_GAIN: f64 = 1500.0;
const NOMINAL_DEADBAND: f64 = 0.1;
const NOMINAL_SOLAR_APERTURE: f64 = 1.5;
const R_SIDE_WALL: f64 = 0.03;
const R_FLOOR_SLAB: f64 = 0.02;
const JITTER: f64 = 0.2;

/// On-disk building description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingConfig {
    pub zones: Vec<ZoneParams>,
    pub adjacency: Vec<(usize, usize, f64)>,
    pub seed: u64,
}

impl BuildingConfig {
    pub fn generate(n_floors: usize, zones_per_floor: usize, seed: u64) -> Self {
        let (topology, zones) = default_building(n_floors, zones_per_floor, seed);
        Self {
            zones,
            adjacency: topology.edges().to_vec(),
            seed,
        }
    }

    pub fn to_building(&self) -> Result<(BuildingTopology, Vec<ZoneParams>), SimError> {
        for (i, z) in self.zones.iter().enumerate() {
            z.validate(i)?;
        }
        let topology = BuildingTopology::new(self.zones.len(), self.adjacency.clone())?;
        Ok((topology, self.zones.clone()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.to_building()?;
        Ok(config)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), SimError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn nominal_internal_gains() -> Vec<f64> {
    (0..HOURS_PER_WEEK)
        .map(|how| {
            let day = how / 24;
            let hour = how % 24;
            let weekend = day >= 5;
            match (weekend, hour) {
                (_, 0..=5) => 150.0,
                (false, 6..=8) => 450.0,
                (false, 9..=16) => 250.0,
                (true, 6..=7) => 150.0,
                (true, 8..=16) => 450.0,
                (_, 17..=21) => 600.0,
                _ => 250.0,
            }
        })
        .collect()
}

/// Floor-grid apartment building with deterministically jittered parameters.
///
/// Zone `f * zones_per_floor + k` is apartment `k` on floor `f`. Apartments
/// share side walls with `k ± 1` on the same floor and slabs with the same
/// position on adjacent floors. Zones on interior floors have less exposed
/// envelope.
pub fn default_building(
    n_floors: usize,
    zones_per_floor: usize,
    seed: u64,
) -> (BuildingTopology, Vec<ZoneParams>) {
    let n_floors = n_floors.max(1);
    let zones_per_floor = zones_per_floor.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = move || 1.0 + rng.random_range(-JITTER..=JITTER);

    let gains = nominal_internal_gains();
    let mut params = Vec::with_capacity(n_floors * zones_per_floor);
    for floor in 0..n_floors {
        let interior = floor > 0 && floor + 1 < n_floors;
        for _ in 0..zones_per_floor {
            let exposure = if interior { MIDDLE_FLOOR_R_OUT_FACTOR } else { 1.0 };
            let gain_scale = jitter();
            params.push(ZoneParams {
                capacitance: NOMINAL_CAPACITANCE * jitter(),
                r_out: NOMINAL_R_OUT * exposure * jitter(),
                heater_max: NOMINAL_HEATER_MAX * jitter(),
                tracker_gain: NOMINAL_TRACKER_GAIN * jitter(),
                tracker_deadband: NOMINAL_DEADBAND,
                internal_gain_schedule: gains.iter().map(|g| g * gain_scale).collect(),
                solar_aperture: NOMINAL_SOLAR_APERTURE * jitter(),
            });
        }
    }

    let mut edges = Vec::new();
    for floor in 0..n_floors {
        for k in 0..zones_per_floor {
            let zone = floor * zones_per_floor + k;
            if k + 1 < zones_per_floor {
                edges.push((zone, zone + 1, R_SIDE_WALL * jitter()));
            }
            if floor + 1 < n_floors {
                edges.push((zone, zone + zones_per_floor, R_FLOOR_SLAB * jitter()));
            }
        }
    }
    let topology = BuildingTopology::new(n_floors * zones_per_floor, edges)
        .expect("grid topology is valid by construction");
    (topology, params)
}
