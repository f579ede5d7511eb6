use std::fs::File;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{Action, DataError, Dataset, Disturbance, NormStats, Observation, ZoneSeries};
use crate::sim::{WeatherRecord, TIMESTAMP_FORMAT};

const HEADER: [&str; 7] = [
    "timestamp",
    "zone_temp_c",
    "hvac_w",
    "setpoint_c",
    "t_out_c",
    "rh_pct",
    "dni_wm2",
];

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dt_s: f64,
    n_zones: usize,
    stats: NormStats,
}

fn zone_file(dir: &Path, zone: usize) -> std::path::PathBuf {
    dir.join(format!("zone_{zone:02}.csv"))
}

/// Writes one CSV per zone plus `stats.json` into `dir`.
pub fn write_dataset_dir(data: &Dataset, dir: &Path) -> Result<(), DataError> {
    data.validate()?;
    std::fs::create_dir_all(dir)?;
    for (i, zone) in data.zones.iter().enumerate() {
        let mut w = csv::Writer::from_path(zone_file(dir, i))?;
        w.write_record(HEADER)?;
        for k in 0..data.len() {
            let (o, a, d) = (&zone.observations[k], &zone.actions[k], &data.disturbances[k]);
            w.write_record([
                data.timestamps[k].format(TIMESTAMP_FORMAT).to_string(),
                o.zone_temp.to_string(),
                o.hvac_power.to_string(),
                a.setpoint.to_string(),
                d.t_out.to_string(),
                d.rh.to_string(),
                d.dni.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let sidecar = Sidecar {
        dt_s: data.dt_s,
        n_zones: data.n_zones(),
        stats: data.stats,
    };
    serde_json::to_writer_pretty(File::create(dir.join("stats.json"))?, &sidecar)?;
    Ok(())
}

fn parse_f64(field: &str, what: &str) -> Result<f64, DataError> {
    field
        .parse()
        .map_err(|_| DataError::Malformed(format!("bad {what} value {field:?}")))
}

/// Reads a directory written by [`write_dataset_dir`].
pub fn read_dataset_dir(dir: &Path) -> Result<Dataset, DataError> {
    let sidecar: Sidecar = serde_json::from_reader(File::open(dir.join("stats.json"))?)?;
    let mut data = Dataset::empty(sidecar.n_zones, sidecar.dt_s);
    data.stats = sidecar.stats;
    for zone in 0..sidecar.n_zones {
        let mut r = csv::Reader::from_path(zone_file(dir, zone))?;
        if r.headers()?.iter().ne(HEADER) {
            return Err(DataError::Malformed(format!("zone {zone}: unexpected header")));
        }
        let mut series = ZoneSeries::default();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != HEADER.len() {
                return Err(DataError::Malformed(format!("zone {zone} row {k}: wrong field count")));
            }
            let ts = NaiveDateTime::parse_from_str(&rec[0], TIMESTAMP_FORMAT)
                .map_err(|e| DataError::Malformed(format!("zone {zone} row {k}: {e}")))?;
            let weather = WeatherRecord {
                timestamp: ts,
                t_out: parse_f64(&rec[4], "t_out")?,
                rh: parse_f64(&rec[5], "rh")?,
                dni: parse_f64(&rec[6], "dni")?,
            };
            if zone == 0 {
                data.timestamps.push(ts);
                data.disturbances.push(Disturbance::from_weather(&weather));
            } else if data.timestamps.get(k) != Some(&ts) {
                return Err(DataError::Malformed(format!("zone {zone} row {k}: timestamps disagree")));
            }
            series.observations.push(Observation {
                zone_temp: parse_f64(&rec[1], "zone_temp")?,
                hvac_power: parse_f64(&rec[2], "hvac")?,
            });
            series.actions.push(Action {
                setpoint: parse_f64(&rec[3], "setpoint")?,
            });
        }
        data.zones[zone] = series;
    }
    data.validate()?;
    Ok(data)
}
