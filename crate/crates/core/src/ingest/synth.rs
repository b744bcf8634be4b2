//! Synthetic household load and seeded fraud rosters.

use chrono::{DateTime, Datelike, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{inject_fraud, AttackKind, AttackSpec, IngestError, MeterSeries};
use crate::billing::INTERVALS_PER_DAY;

/// 2024-01-01T00:00:00Z, a Monday.
pub const DEFAULT_START: DateTime<Utc> = DateTime::from_timestamp(1_704_067_200, 0).unwrap();

const NOISE_SIGMA: f64 = 0.25;
const ROSTER_STREAM: u64 = u64::MAX;

pub fn meter_id(index: usize) -> String {
    format!("M{:05}", index + 1)
}

fn bump(slot: f64, centre: f64, width: f64) -> f64 {
    let z = (slot - centre) / width;
    (-0.5 * z * z).exp()
}

fn one_meter(index: usize, days: usize, start: DateTime<Utc>, seed: u64) -> MeterSeries {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let household = rng.random_range(0.8..1.25);
    let base = 0.12 * household;
    let morning_amp = rng.random_range(0.25..0.45) * household;
    let evening_amp = rng.random_range(0.45..0.75) * household;
    let morning_at = 15.0 + rng.random_range(-1.5..1.5);
    let evening_at = 38.0 + rng.random_range(-2.0..2.0);
    let weekend_lift = rng.random_range(0.05..0.15);
    let noise = LogNormal::new(-NOISE_SIGMA * NOISE_SIGMA / 2.0, NOISE_SIGMA).expect("valid lognormal");

    let mut readings = Vec::with_capacity(days * INTERVALS_PER_DAY);
    for day in 0..days {
        let date = start + Duration::days(day as i64);
        let weekday = date.weekday().num_days_from_monday();
        let week_factor = if weekday >= 5 { 1.0 + weekend_lift } else { 1.0 };
        for slot in 0..INTERVALS_PER_DAY {
            let s = slot as f64;
            let shape = base
                + morning_amp * bump(s, morning_at, 2.0)
                + evening_amp * bump(s, evening_at, 3.0)
                // daytime activity, stronger at weekends
                + 0.08 * household * week_factor * bump(s, 27.0, 6.0);
            let kwh = shape * week_factor * noise.sample(&mut rng);
            // meter resolution is 1 Wh
            readings.push((kwh * 1000.0).round() / 1000.0);
        }
    }
    MeterSeries::new(meter_id(index), start, readings)
}

/// Honest corpus: base load, morning and evening peaks, weekend lift and
/// multiplicative lognormal noise. Each meter draws from its own ChaCha stream.
pub fn synthesize(n_meters: usize, days: usize, seed: u64) -> Vec<MeterSeries> {
    synthesize_from(DEFAULT_START, n_meters, days, seed)
}

pub fn synthesize_from(start: DateTime<Utc>, n_meters: usize, days: usize, seed: u64) -> Vec<MeterSeries> {
    (0..n_meters).map(|i| one_meter(i, days, start, seed)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub meter_id: String,
    pub attack: AttackSpec,
}

/// Everything needed to regenerate a corpus, plus its ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub n_meters: usize,
    pub days: usize,
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub fraud_fraction: f64,
    pub attack_roster: Vec<RosterEntry>,
}

impl CorpusManifest {
    /// Rebuilds the corpus from the manifest alone.
    pub fn replay(&self) -> Result<Vec<MeterSeries>, IngestError> {
        let mut series = synthesize_from(self.start, self.n_meters, self.days, self.seed);
        for entry in &self.attack_roster {
            let s = series
                .iter_mut()
                .find(|s| s.meter_id == entry.meter_id)
                .ok_or_else(|| IngestError::Manifest(format!("unknown meter {}", entry.meter_id)))?;
            *s = inject_fraud(s, entry.attack)?;
        }
        Ok(series)
    }

    /// Attaches roster labels to series loaded from CSV.
    pub fn label(&self, mut series: Vec<MeterSeries>) -> Result<Vec<MeterSeries>, IngestError> {
        for entry in &self.attack_roster {
            let s = series
                .iter_mut()
                .find(|s| s.meter_id == entry.meter_id)
                .ok_or_else(|| IngestError::Manifest(format!("roster meter {} not in corpus", entry.meter_id)))?;
            s.attack = Some(entry.attack);
        }
        Ok(series)
    }
}

fn sample_attack(rng: &mut ChaCha20Rng, n_intervals: usize) -> AttackSpec {
    let kind = match rng.random_range(0..3) {
        0 => AttackKind::Scale { alpha: rng.random_range(0.2..=0.6) },
        1 => {
            let len = rng.random_range(8..=24);
            AttackKind::ZeroInterval { start: rng.random_range(0..=INTERVALS_PER_DAY - len), len }
        }
        _ => AttackKind::NightShift { fraction: rng.random_range(0.3..=0.6) },
    };
    AttackSpec::full(kind, n_intervals)
}

/// Synthesizes `n_meters` honest series and turns `ceil(fraud_fraction * n_meters)`
/// of them, chosen by seeded shuffle, into labelled theft cases with attacks
/// drawn uniformly from the taxonomy.
pub fn generate_corpus(
    n_meters: usize,
    days: usize,
    fraud_fraction: f64,
    seed: u64,
) -> Result<(Vec<MeterSeries>, CorpusManifest), IngestError> {
    if !(0.0..=1.0).contains(&fraud_fraction) {
        return Err(IngestError::Manifest(format!("fraud fraction {fraud_fraction} not in [0, 1]")));
    }
    // 0.3 * 200 is 60.000000000000007 in binary floating point
    let n_fraud = ((fraud_fraction * n_meters as f64 - 1e-9).ceil().max(0.0) as usize).min(n_meters);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(ROSTER_STREAM);
    let mut order: Vec<usize> = (0..n_meters).collect();
    order.shuffle(&mut rng);
    let mut chosen = order[..n_fraud].to_vec();
    chosen.sort_unstable();
    let n_intervals = days * INTERVALS_PER_DAY;
    let attack_roster = if n_intervals == 0 {
        Vec::new()
    } else {
        chosen
            .into_iter()
            .map(|i| RosterEntry { meter_id: meter_id(i), attack: sample_attack(&mut rng, n_intervals) })
            .collect()
    };
    let manifest = CorpusManifest {
        n_meters,
        days,
        seed,
        start: DEFAULT_START,
        fraud_fraction,
        attack_roster,
    };
    let series = manifest.replay()?;
    Ok((series, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;

    #[test]
    fn sizes() {
        assert!(synthesize(0, 31, 1).is_empty());
        let s = synthesize(5, 31, 1);
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|m| m.readings.len() == 1488));
        assert!(s.iter().all(|m| m.readings.iter().all(|r| *r >= 0.0)));
    }

    #[test]
    fn deterministic() {
        assert_eq!(synthesize(3, 2, 9), synthesize(3, 2, 9));
        assert_ne!(synthesize(3, 2, 9), synthesize(3, 2, 10));
    }

    #[test]
    fn meter_streams_are_independent_of_corpus_size() {
        let small = synthesize(2, 3, 4);
        let large = synthesize(6, 3, 4);
        assert_eq!(small[..], large[..2]);
    }

    #[test]
    fn fraud_counts() {
        let (s, m) = generate_corpus(10, 2, 0.0, 3).unwrap();
        assert!(s.iter().all(|x| x.label() == Label::Normal));
        assert!(m.attack_roster.is_empty());
        let (s, _) = generate_corpus(10, 2, 0.5, 3).unwrap();
        assert_eq!(s.iter().filter(|x| x.label() == Label::Malicious).count(), 5);
        let (s, _) = generate_corpus(10, 2, 0.31, 3).unwrap();
        assert_eq!(s.iter().filter(|x| x.label() == Label::Malicious).count(), 4);
        let (s, _) = generate_corpus(200, 1, 0.3, 3).unwrap();
        assert_eq!(s.iter().filter(|x| x.label() == Label::Malicious).count(), 60);
    }

    #[test]
    fn manifest_replay_matches() {
        let (s, m) = generate_corpus(12, 3, 0.3, 17).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: CorpusManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.replay().unwrap(), s);
    }
}
