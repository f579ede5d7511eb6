use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::SimError;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Outdoor conditions for one simulation timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: NaiveDateTime,
    /// °C
    pub t_out: f64,
    /// Relative humidity, %.
    pub rh: f64,
    /// Direct normal irradiance, W/m².
    pub dni: f64,
}

impl WeatherRecord {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=100.0).contains(&self.rh) {
            return Err(SimError::InvalidWeather(format!(
                "{}: rh {} outside [0, 100]",
                self.timestamp, self.rh
            )));
        }
        if !(self.dni >= 0.0) {
            return Err(SimError::InvalidWeather(format!(
                "{}: negative dni {}",
                self.timestamp, self.dni
            )));
        }
        if !self.t_out.is_finite() {
            return Err(SimError::InvalidWeather(format!(
                "{}: non-finite outdoor temperature",
                self.timestamp
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct WeatherRow {
    timestamp: String,
    t_out_c: f64,
    rh_pct: f64,
    dni_wm2: f64,
}

pub fn write_weather_csv<W: Write>(records: &[WeatherRecord], out: W) -> Result<(), SimError> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(WeatherRow {
            timestamp: r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            t_out_c: r.t_out,
            rh_pct: r.rh,
            dni_wm2: r.dni,
        })?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_weather_csv<R: Read>(input: R) -> Result<Vec<WeatherRecord>, SimError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let expected = ["timestamp", "t_out_c", "rh_pct", "dni_wm2"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(SimError::InvalidWeather(format!(
            "unexpected header {:?}, expected {:?}",
            headers, expected
        )));
    }
    let mut records = Vec::new();
    for row in reader.deserialize::<WeatherRow>() {
        let row = row?;
        let timestamp = NaiveDateTime::parse_from_str(&row.timestamp, TIMESTAMP_FORMAT)
            .map_err(|e| SimError::InvalidWeather(format!("bad timestamp {:?}: {e}", row.timestamp)))?;
        let record = WeatherRecord {
            timestamp,
            t_out: row.t_out_c,
            rh: row.rh_pct,
            dni: row.dni_wm2,
        };
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn csv_round_trip_and_header() {
        let t0 = NaiveDate::from_ymd_opt(2023, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let records: Vec<_> = (0..3)
            .map(|k| WeatherRecord {
                timestamp: t0 + chrono::Duration::minutes(15 * k),
                t_out: -12.25 + k as f64 * 0.1,
                rh: 71.5,
                dni: 0.0,
            })
            .collect();
        let mut buf = Vec::new();
        write_weather_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,t_out_c,rh_pct,dni_wm2\n2023-01-01T00:00:00,"));
        assert_eq!(read_weather_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn rejects_out_of_range_humidity() {
        let text = "timestamp,t_out_c,rh_pct,dni_wm2\n2023-01-01T00:00:00,-3,140,0\n";
        assert!(read_weather_csv(text.as_bytes()).is_err());
        let text = "time,t_out_c,rh_pct,dni_wm2\n2023-01-01T00:00:00,-3,40,0\n";
        assert!(read_weather_csv(text.as_bytes()).is_err());
    }
}
