//! `meter_id,timestamp,kwh` files with ISO-8601 UTC half-hour timestamps.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Duration, Timelike, Utc};

use super::{IngestError, MeterSeries};

const HEADER: [&str; 3] = ["meter_id", "timestamp", "kwh"];

fn malformed(line: u64, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow { line, reason: reason.into() }
}

fn parse_timestamp(raw: &str, line: u64) -> Result<DateTime<Utc>, IngestError> {
    let ts = DateTime::parse_from_rfc3339(raw).map_err(|e| malformed(line, format!("timestamp `{raw}`: {e}")))?;
    if ts.offset().local_minus_utc() != 0 {
        return Err(malformed(line, format!("timestamp `{raw}` is not UTC")));
    }
    let ts = ts.with_timezone(&Utc);
    if ts.minute() % 30 != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(malformed(line, format!("timestamp `{raw}` is not half-hour aligned")));
    }
    Ok(ts)
}

struct Building {
    start: DateTime<Utc>,
    last: DateTime<Utc>,
    readings: Vec<f64>,
}

/// Parses a readings file. Rows of different meters may interleave, but each
/// meter's rows must advance by exactly 30 minutes.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<MeterSeries>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).collect::<Vec<_>>() != HEADER {
        return Err(malformed(1, format!("expected header `{}`", HEADER.join(","))));
    }
    let step = Duration::minutes(30);
    let mut meters: BTreeMap<String, Building> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(malformed(line, format!("expected 3 fields, found {}", record.len())));
        }
        let meter = record[0].trim();
        if meter.is_empty() {
            return Err(malformed(line, "empty meter_id"));
        }
        let ts = parse_timestamp(record[1].trim(), line)?;
        let kwh: f64 = record[2]
            .trim()
            .parse()
            .map_err(|_| malformed(line, format!("kwh `{}` is not a number", &record[2])))?;
        if !kwh.is_finite() || kwh < 0.0 {
            return Err(malformed(line, format!("kwh {kwh} must be finite and non-negative")));
        }
        match meters.get_mut(meter) {
            None => {
                meters.insert(meter.to_string(), Building { start: ts, last: ts, readings: vec![kwh] });
            }
            Some(b) => {
                if ts <= b.last {
                    return Err(IngestError::NonMonotonicTimestamps { meter: meter.to_string(), timestamp: ts, line });
                }
                if ts - b.last != step {
                    return Err(IngestError::GapDetected { meter: meter.to_string(), timestamp: b.last + step });
                }
                b.last = ts;
                b.readings.push(kwh);
            }
        }
    }
    Ok(meters
        .into_iter()
        .map(|(id, b)| MeterSeries::new(id, b.start, b.readings))
        .collect())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<MeterSeries>, IngestError> {
    read_csv(std::fs::File::open(path)?)
}

/// Normalized form: meters in the given order, rows in time order, readings
/// in shortest round-trip decimal form.
pub fn write_csv(series: &[MeterSeries]) -> String {
    let mut out = String::from("meter_id,timestamp,kwh\n");
    let step = Duration::minutes(30);
    for s in series {
        let mut ts = s.start;
        for r in &s.readings {
            out.push_str(&s.meter_id);
            out.push(',');
            out.push_str(&ts.format("%Y-%m-%dT%H:%M:%SZ").to_string());
            out.push(',');
            out.push_str(&r.to_string());
            out.push('\n');
            ts += step;
        }
    }
    out
}
