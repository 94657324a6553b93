//! CSV ingestion and export.
//!
//! Trajectory CSV: `vessel_id,date,hour,lon,lat`, ISO-8601 dates, one row per
//! hour. Ping CSV: `vessel_id,timestamp,lon,lat` with RFC 3339 timestamps.
//! Floats are written in shortest round-trip form, so export/ingest preserves
//! values exactly.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};

use super::{FleetDataset, RawPing, TrajError, Trajectory};

fn io_err(path: &Path, source: std::io::Error) -> TrajError {
    TrajError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, source: csv::Error) -> TrajError {
    TrajError::Csv { path: path.display().to_string(), source }
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<(), TrajError> {
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    for name in expected {
        if !headers.iter().any(|h| h == *name) {
            return Err(TrajError::MissingColumn { name: (*name).into(), path: path.display().to_string() });
        }
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T, TrajError>
where
    T::Err: std::fmt::Display,
{
    let line = rec.position().map(|p| p.line()).unwrap_or(0);
    let raw = rec.get(idx).ok_or_else(|| TrajError::MalformedRow {
        line,
        detail: format!("missing field `{name}`"),
    })?;
    raw.parse::<T>().map_err(|e| TrajError::MalformedRow {
        line,
        detail: format!("field `{name}` = {raw:?}: {e}"),
    })
}

pub fn write_trajectory_csv(data: &FleetDataset, path: &Path) -> Result<(), TrajError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["vessel_id", "date", "hour", "lon", "lat"]).map_err(|e| csv_err(path, e))?;
    for t in &data.trajectories {
        for (h, p) in t.positions.iter().enumerate() {
            w.write_record([
                t.vessel_id.as_str(),
                &t.date.to_string(),
                &h.to_string(),
                &p[0].to_string(),
                &p[1].to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Read a trajectory CSV. Every (vessel, date) must carry a full set of hours
/// `0..h-1` with the same `h` across the file; the harbour is inferred from
/// the first sample and endpoints are checked against it within `eps_port`.
pub fn read_trajectory_csv(path: &Path, eps_port: f64) -> Result<FleetDataset, TrajError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    check_header(path, &mut reader, &["vessel_id", "date", "hour", "lon", "lat"])?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).expect("checked above");
    let (c_vessel, c_date, c_hour, c_lon, c_lat) =
        (col("vessel_id"), col("date"), col("hour"), col("lon"), col("lat"));

    let mut groups: BTreeMap<(String, NaiveDate), BTreeMap<usize, [f64; 2]>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let vessel: String = parse_field(&rec, c_vessel, "vessel_id")?;
        let date: NaiveDate = parse_field(&rec, c_date, "date")?;
        let hour: usize = parse_field(&rec, c_hour, "hour")?;
        let lon: f64 = parse_field(&rec, c_lon, "lon")?;
        let lat: f64 = parse_field(&rec, c_lat, "lat")?;
        let slot = groups.entry((vessel.clone(), date)).or_default();
        if slot.insert(hour, [lon, lat]).is_some() {
            return Err(TrajError::MalformedRow {
                line,
                detail: format!("duplicate hour {hour} for vessel {vessel} on {date}"),
            });
        }
    }
    if groups.is_empty() {
        return Err(TrajError::EmptyDataset);
    }
    let h = groups.values().next().expect("nonempty").len();
    let mut trajectories = Vec::with_capacity(groups.len());
    for ((vessel, date), hours) in groups {
        if hours.len() != h || hours.keys().copied().ne(0..h) {
            return Err(TrajError::MalformedRow {
                line: 0,
                detail: format!("vessel {vessel} on {date}: expected hours 0..{h}, got {:?}", hours.keys().collect::<Vec<_>>()),
            });
        }
        trajectories.push(Trajectory { vessel_id: vessel, date, positions: hours.into_values().collect() });
    }
    let harbour = trajectories[0].positions[0];
    let data = FleetDataset::from_trajectories(trajectories, harbour)?;
    data.check_ports(eps_port)?;
    Ok(data)
}

pub fn write_pings_csv(pings: &[RawPing], path: &Path) -> Result<(), TrajError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["vessel_id", "timestamp", "lon", "lat"]).map_err(|e| csv_err(path, e))?;
    for p in pings {
        w.write_record([
            p.vessel_id.as_str(),
            &p.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            &p.lon.to_string(),
            &p.lat.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn read_pings_csv(path: &Path) -> Result<Vec<RawPing>, TrajError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    check_header(path, &mut reader, &["vessel_id", "timestamp", "lon", "lat"])?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).expect("checked above");
    let (c_vessel, c_ts, c_lon, c_lat) = (col("vessel_id"), col("timestamp"), col("lon"), col("lat"));
    let mut pings = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let ts: DateTime<Utc> = parse_field::<DateTime<chrono::FixedOffset>>(&rec, c_ts, "timestamp")?.with_timezone(&Utc);
        pings.push(RawPing {
            vessel_id: parse_field(&rec, c_vessel, "vessel_id")?,
            timestamp: ts,
            lon: parse_field(&rec, c_lon, "lon")?,
            lat: parse_field(&rec, c_lat, "lat")?,
        });
    }
    Ok(pings)
}
