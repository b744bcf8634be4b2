//! Electricity theft detection with a bidirectional LSTM over day windows.

mod lstm;
mod model;

pub use lstm::{lstm_step, sigmoid, LstmCellParams, GATES};
pub use model::{bce, forward, loss_and_gradients, BiLstmModel, Normalizer};

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::billing::INTERVALS_PER_DAY;
use crate::ingest::{Label, MeterSeries};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training corpus is degenerate: {0}")]
    DegenerateCorpus(String),
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub num_hidden_units: usize,
    pub window_len: usize,
    pub input_features: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient norm bound; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            num_hidden_units: 32,
            window_len: INTERVALS_PER_DAY,
            input_features: 1,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 15,
            batch_size: 32,
            seed: 7,
            clip_norm: 5.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::Config(m.into()));
        if self.num_hidden_units == 0 || self.window_len == 0 || self.input_features == 0 {
            return bad("hidden units, window length and features must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return bad("clip norm must be finite and non-negative");
        }
        Ok(())
    }
}

/// Labelled windows, time-major with `input_features` values per step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub windows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl Dataset {
    /// Cuts each series into non-overlapping windows of `window_len` readings;
    /// a trailing partial window is dropped. A window is malicious when it
    /// overlaps the series' attack range.
    pub fn from_series(series: &[MeterSeries], window_len: usize) -> Self {
        let mut d = Dataset::default();
        if window_len == 0 {
            return d;
        }
        for s in series {
            for (k, w) in s.readings.chunks_exact(window_len).enumerate() {
                let (lo, hi) = (k * window_len, (k + 1) * window_len);
                let label = match s.attack {
                    Some(a) if a.range_start < hi && lo < a.range_end => Label::Malicious,
                    _ => Label::Normal,
                };
                d.windows.push(w.to_vec());
                d.labels.push(label);
            }
        }
        d
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_malicious(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Malicious).count()
    }
}

fn target(label: Label) -> f64 {
    match label {
        Label::Normal => 0.0,
        Label::Malicious => 1.0,
    }
}

/// Stratified split of meter indices: `test_fraction` of each class (rounded)
/// goes to the test side, chosen by seeded shuffle. Both lists are sorted.
pub fn split_meters(series: &[MeterSeries], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for label in [Label::Normal, Label::Malicious] {
        let mut idx: Vec<usize> = (0..series.len()).filter(|&i| series[i].label() == label).collect();
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub n_windows: usize,
    pub n_malicious: usize,
}

/// Minibatch SGD with momentum on binary cross-entropy.
///
/// Inputs are z-scored with statistics of the training readings, stored in the
/// model. Minibatch order is reshuffled each epoch from the config seed.
/// Fails on an empty or single-class corpus.
pub fn train(data: &Dataset, config: &DetectorConfig) -> Result<(BiLstmModel, TrainReport), DetectorError> {
    config.validate()?;
    if data.is_empty() {
        return Err(DetectorError::DegenerateCorpus("no training windows".into()));
    }
    let n_mal = data.n_malicious();
    if n_mal == 0 || n_mal == data.len() {
        return Err(DetectorError::DegenerateCorpus("training windows must contain both classes".into()));
    }
    let want = config.window_len * config.input_features;
    if let Some(w) = data.windows.iter().find(|w| w.len() != want) {
        return Err(DetectorError::ShapeMismatch(format!("window of {} values, expected {want}", w.len())));
    }

    let mut model = BiLstmModel::init(config);
    model.normalizer = Normalizer::fit(data.windows.iter().flatten());
    let mut velocity = vec![0.0; model.n_params()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0);
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], f64)> =
                idx.iter().map(|&i| (data.windows[i].as_slice(), target(data.labels[i]))).collect();
            let (loss, grad) = loss_and_gradients(&model, &batch)?;
            sum += loss;
            batches += 1;
            let norm = grad.params().map(|g| g * g).sum::<f64>().sqrt();
            let clip = if config.clip_norm > 0.0 && norm > config.clip_norm { config.clip_norm / norm } else { 1.0 };
            for ((p, v), g) in model.params_mut().zip(velocity.iter_mut()).zip(grad.params()) {
                *v = config.momentum * *v - config.learning_rate * clip * g;
                *p += *v;
            }
        }
        if !model.is_finite() {
            return Err(DetectorError::Diverged(epoch));
        }
        epoch_losses.push(sum / batches as f64);
    }
    Ok((model, TrainReport { epoch_losses, n_windows: data.len(), n_malicious: n_mal }))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Malicious, Label::Malicious) => self.tp += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Normal, Label::Malicious) => self.fp += 1,
            (Label::Malicious, Label::Normal) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    fn ratio(num: u64, den: u64) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    /// `None` when there are no samples.
    pub fn accuracy(&self) -> Option<f64> {
        Self::ratio(self.tp + self.tn, self.total())
    }

    /// `None` when nothing was flagged.
    pub fn precision(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    /// `None` when there are no malicious samples.
    pub fn recall(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics { accuracy: self.accuracy(), precision: self.precision(), recall: self.recall(), confusion: *self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub confusion: ConfusionMatrix,
}

/// Printed in place of a metric whose denominator is zero.
pub const UNDEFINED: &str = "undefined";

fn fmt_metric(m: Option<f64>) -> String {
    m.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:.6}"))
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "accuracy {} precision {} recall {} (tp {} tn {} fp {} fn {})",
            fmt_metric(self.accuracy),
            fmt_metric(self.precision),
            fmt_metric(self.recall),
            self.confusion.tp,
            self.confusion.tn,
            self.confusion.fp,
            self.confusion.fn_
        )
    }
}

/// CSV report `split,accuracy,precision,recall,tp,tn,fp,fn`.
pub fn metrics_to_csv(rows: &[(&str, Metrics)]) -> String {
    let mut out = String::from("split,accuracy,precision,recall,tp,tn,fp,fn\n");
    for (split, m) in rows {
        let c = m.confusion;
        out.push_str(&format!(
            "{split},{},{},{},{},{},{},{}\n",
            fmt_metric(m.accuracy),
            fmt_metric(m.precision),
            fmt_metric(m.recall),
            c.tp,
            c.tn,
            c.fp,
            c.fn_
        ));
    }
    out
}

/// Window is flagged malicious when its probability exceeds `threshold`.
pub fn evaluate(model: &BiLstmModel, data: &Dataset, threshold: f64) -> Result<Metrics, DetectorError> {
    let mut cm = ConfusionMatrix::default();
    for (w, &truth) in data.windows.iter().zip(&data.labels) {
        let p = model.predict(w)?;
        cm.record(truth, if p > threshold { Label::Malicious } else { Label::Normal });
    }
    Ok(cm.metrics())
}

/// Mean window probability over a meter's complete windows.
pub fn meter_probability(model: &BiLstmModel, series: &MeterSeries) -> Result<f64, DetectorError> {
    let w = model.config.window_len * model.config.input_features;
    let probs = series.readings.chunks_exact(w).map(|c| model.predict(c)).collect::<Result<Vec<_>, _>>()?;
    if probs.is_empty() {
        return Err(DetectorError::ShapeMismatch(format!(
            "meter {} has {} readings, shorter than one window",
            series.meter_id,
            series.readings.len()
        )));
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}
