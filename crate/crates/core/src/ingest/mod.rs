//! Half-hourly smart-meter series: CSV loading, synthetic corpora and labelled
//! theft injection.

mod csv_io;
mod synth;

pub use csv_io::{load_csv, read_csv, write_csv};
pub use synth::{generate_corpus, synthesize, synthesize_from, CorpusManifest, RosterEntry, DEFAULT_START};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::billing::INTERVALS_PER_DAY;

/// Intervals 0..13 (00:00 to 07:00) form the off-peak night window.
pub const NIGHT_SLOTS: usize = 14;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("meter {meter}: missing reading at {timestamp}")]
    GapDetected { meter: String, timestamp: DateTime<Utc> },
    #[error("meter {meter}: timestamp {timestamp} does not advance (line {line})")]
    NonMonotonicTimestamps { meter: String, timestamp: DateTime<Utc>, line: u64 },
    #[error("scale factor {0} must lie strictly between 0 and 1")]
    InvalidAlpha(f64),
    #[error("invalid attack: {0}")]
    InvalidAttack(String),
    #[error("meter {0} already carries an injected attack")]
    AlreadyAttacked(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Malicious,
}

/// Theft pattern applied to honest consumption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    /// Under-reporting: readings multiplied by `alpha` in `(0, 1)`.
    Scale { alpha: f64 },
    /// Meter bypass: slots `start..start + len` of every day read zero.
    ZeroInterval { start: usize, len: usize },
    /// Load shifting: `fraction` of each day's on-peak consumption is reported
    /// spread evenly over the night slots; daily totals are unchanged.
    NightShift { fraction: f64 },
}

/// An attack and the absolute interval range `[start, end)` it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(flatten)]
    pub kind: AttackKind,
    pub range_start: usize,
    pub range_end: usize,
}

impl AttackSpec {
    pub fn full(kind: AttackKind, n_intervals: usize) -> Self {
        AttackSpec { kind, range_start: 0, range_end: n_intervals }
    }

    pub fn validate(&self, n_intervals: usize) -> Result<(), IngestError> {
        if self.range_start >= self.range_end || self.range_end > n_intervals {
            return Err(IngestError::InvalidAttack(format!(
                "range {}..{} outside series of {n_intervals}",
                self.range_start, self.range_end
            )));
        }
        match self.kind {
            AttackKind::Scale { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(IngestError::InvalidAlpha(alpha));
                }
            }
            AttackKind::ZeroInterval { start, len } => {
                if len == 0 || start + len > INTERVALS_PER_DAY {
                    return Err(IngestError::InvalidAttack(format!("daily slots {start}+{len} exceed one day")));
                }
            }
            AttackKind::NightShift { fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(IngestError::InvalidAttack(format!("shift fraction {fraction} not in (0, 1]")));
                }
                if !self.range_start.is_multiple_of(INTERVALS_PER_DAY) || !self.range_end.is_multiple_of(INTERVALS_PER_DAY) {
                    return Err(IngestError::InvalidAttack("night shift needs a day-aligned range".into()));
                }
            }
        }
        Ok(())
    }
}

/// One meter's readings in kWh per 30-minute interval, starting at `start`.
/// The series is malicious exactly when it carries an attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterSeries {
    pub meter_id: String,
    pub start: DateTime<Utc>,
    pub readings: Vec<f64>,
    pub attack: Option<AttackSpec>,
}

impl MeterSeries {
    pub fn new(meter_id: impl Into<String>, start: DateTime<Utc>, readings: Vec<f64>) -> Self {
        MeterSeries { meter_id: meter_id.into(), start, readings, attack: None }
    }

    pub fn label(&self) -> Label {
        if self.attack.is_some() {
            Label::Malicious
        } else {
            Label::Normal
        }
    }

    pub fn days(&self) -> usize {
        self.readings.len() / INTERVALS_PER_DAY
    }

    pub fn daily_totals(&self) -> Vec<f64> {
        self.readings.chunks_exact(INTERVALS_PER_DAY).map(|d| d.iter().sum()).collect()
    }

    pub fn mean_daily(&self) -> f64 {
        let t = self.daily_totals();
        if t.is_empty() {
            0.0
        } else {
            t.iter().sum::<f64>() / t.len() as f64
        }
    }
}

/// Applies `spec` and labels the result malicious.
pub fn inject_fraud(series: &MeterSeries, spec: AttackSpec) -> Result<MeterSeries, IngestError> {
    if series.attack.is_some() {
        return Err(IngestError::AlreadyAttacked(series.meter_id.clone()));
    }
    spec.validate(series.readings.len())?;
    let mut out = series.clone();
    let range = spec.range_start..spec.range_end;
    match spec.kind {
        AttackKind::Scale { alpha } => {
            for r in &mut out.readings[range] {
                *r *= alpha;
            }
        }
        AttackKind::ZeroInterval { start, len } => {
            for t in range {
                let slot = t % INTERVALS_PER_DAY;
                if slot >= start && slot < start + len {
                    out.readings[t] = 0.0;
                }
            }
        }
        AttackKind::NightShift { fraction } => {
            for day in out.readings[range].chunks_exact_mut(INTERVALS_PER_DAY) {
                let (night, rest) = day.split_at_mut(NIGHT_SLOTS);
                let moved: f64 = rest.iter().map(|r| r * fraction).sum();
                for r in rest.iter_mut() {
                    *r -= *r * fraction;
                }
                let each = moved / NIGHT_SLOTS as f64;
                for r in night.iter_mut() {
                    *r += each;
                }
            }
        }
    }
    out.attack = Some(spec);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(readings: Vec<f64>) -> MeterSeries {
        MeterSeries::new("m", DEFAULT_START, readings)
    }

    #[test]
    fn scale_rejects_alpha_one() {
        let s = series(vec![1.0; 48]);
        let spec = AttackSpec::full(AttackKind::Scale { alpha: 1.0 }, 48);
        assert!(matches!(inject_fraud(&s, spec), Err(IngestError::InvalidAlpha(a)) if a == 1.0));
        let spec = AttackSpec::full(AttackKind::Scale { alpha: 0.0 }, 48);
        assert!(inject_fraud(&s, spec).is_err());
    }

    #[test]
    fn scale_halves() {
        let s = series((0..96).map(|i| i as f64 * 0.1).collect());
        let out = inject_fraud(&s, AttackSpec::full(AttackKind::Scale { alpha: 0.5 }, 96)).unwrap();
        for (a, b) in s.readings.iter().zip(&out.readings) {
            assert_eq!(*b, a * 0.5);
        }
        assert_eq!(out.label(), Label::Malicious);
        assert_eq!(s.label(), Label::Normal);
    }

    #[test]
    fn zero_interval_hits_daily_slots_in_range() {
        let s = series(vec![1.0; 144]);
        let spec = AttackSpec { kind: AttackKind::ZeroInterval { start: 10, len: 4 }, range_start: 48, range_end: 144 };
        let out = inject_fraud(&s, spec).unwrap();
        let zeros: Vec<usize> = (0..144).filter(|&t| out.readings[t] == 0.0).collect();
        assert_eq!(zeros, vec![58, 59, 60, 61, 106, 107, 108, 109]);
        let bad = AttackSpec::full(AttackKind::ZeroInterval { start: 40, len: 9 }, 144);
        assert!(inject_fraud(&s, bad).is_err());
    }

    #[test]
    fn night_shift_preserves_daily_totals() {
        let readings: Vec<f64> = (0..96).map(|i| 0.2 + ((i * 37) % 11) as f64 * 0.05).collect();
        let s = series(readings);
        let out = inject_fraud(&s, AttackSpec::full(AttackKind::NightShift { fraction: 0.3 }, 96)).unwrap();
        // independent summation per day
        for day in 0..2 {
            let before: f64 = s.readings[day * 48..(day + 1) * 48].iter().sum();
            let after: f64 = out.readings[day * 48..(day + 1) * 48].iter().sum();
            assert!((before - after).abs() < 1e-9, "{before} vs {after}");
            let night_before: f64 = s.readings[day * 48..day * 48 + 14].iter().sum();
            let night_after: f64 = out.readings[day * 48..day * 48 + 14].iter().sum();
            assert!(night_after / after > night_before / before);
        }
        let misaligned = AttackSpec { kind: AttackKind::NightShift { fraction: 0.3 }, range_start: 1, range_end: 49 };
        assert!(inject_fraud(&s, misaligned).is_err());
    }

    #[test]
    fn attacks_keep_readings_non_negative() {
        let s = series((0..96).map(|i| (i % 7) as f64 * 0.01).collect());
        for kind in [
            AttackKind::Scale { alpha: 0.2 },
            AttackKind::ZeroInterval { start: 0, len: 48 },
            AttackKind::NightShift { fraction: 1.0 },
        ] {
            let out = inject_fraud(&s, AttackSpec::full(kind, 96)).unwrap();
            assert!(out.readings.iter().all(|r| *r >= 0.0));
        }
    }

    #[test]
    fn double_injection_is_refused() {
        let s = series(vec![1.0; 48]);
        let once = inject_fraud(&s, AttackSpec::full(AttackKind::Scale { alpha: 0.5 }, 48)).unwrap();
        assert!(matches!(
            inject_fraud(&once, AttackSpec::full(AttackKind::Scale { alpha: 0.5 }, 48)),
            Err(IngestError::AlreadyAttacked(_))
        ));
    }

    #[test]
    fn attack_spec_json_shape() {
        let spec = AttackSpec::full(AttackKind::Scale { alpha: 0.4 }, 96);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"scale","alpha":0.4,"range_start":0,"range_end":96}"#);
        assert_eq!(serde_json::from_str::<AttackSpec>(&json).unwrap(), spec);
    }
}
