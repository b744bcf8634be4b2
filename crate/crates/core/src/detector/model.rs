//! Bidirectional LSTM classifier over one window of readings.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{backward, sigmoid, unroll, LstmCellParams};
use super::{DetectorConfig, DetectorError};

/// Affine input normalization fitted on the training readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer { mean: 0.0, std: 1.0 }
    }
}

impl Normalizer {
    /// Global z-score over every value; a constant input maps to zero.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for &v in values {
            n += 1.0;
            let d = v - mean;
            mean += d / n;
            m2 += d * (v - mean);
        }
        if n == 0.0 {
            return Self::default();
        }
        let std = (m2 / n).sqrt();
        Normalizer { mean, std: if std > 1e-12 { std } else { 1.0 } }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// Forward and backward cells, a logistic head over `[h_fwd, h_bwd]` and the
/// input normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmModel {
    pub config: DetectorConfig,
    pub normalizer: Normalizer,
    pub forward: LstmCellParams,
    pub backward: LstmCellParams,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
}

impl BiLstmModel {
    pub fn zeros(config: &DetectorConfig) -> Self {
        let (h, f) = (config.num_hidden_units, config.input_features);
        BiLstmModel {
            config: config.clone(),
            normalizer: Normalizer::default(),
            forward: LstmCellParams::zeros(h, f),
            backward: LstmCellParams::zeros(h, f),
            head_weights: vec![0.0; 2 * h],
            head_bias: 0.0,
        }
    }

    /// Seeded initialization: uniform `+-1/sqrt(hidden)` weights, forget bias 1.
    pub fn init(config: &DetectorConfig) -> Self {
        let (h, f) = (config.num_hidden_units, config.input_features);
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let forward = LstmCellParams::init(h, f, &mut rng);
        let backward = LstmCellParams::init(h, f, &mut rng);
        let bound = 1.0 / (h as f64).sqrt();
        let head_weights = (0..2 * h).map(|_| rng.random_range(-bound..bound)).collect();
        BiLstmModel {
            config: config.clone(),
            normalizer: Normalizer::default(),
            forward,
            backward,
            head_weights,
            head_bias: 0.0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.forward.n_params() + self.backward.n_params() + self.head_weights.len() + 1
    }

    /// Every trainable parameter in file order.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.forward
            .iter()
            .chain(self.backward.iter())
            .chain(self.head_weights.iter())
            .chain(std::iter::once(&self.head_bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.forward
            .iter_mut()
            .chain(self.backward.iter_mut())
            .chain(self.head_weights.iter_mut())
            .chain(std::iter::once(&mut self.head_bias))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    fn check_window(&self, window: &[f64]) -> Result<(), DetectorError> {
        let want = self.config.window_len * self.config.input_features;
        if window.len() != want || want == 0 {
            return Err(DetectorError::ShapeMismatch(format!(
                "window has {} values, model expects {} steps x {} features",
                window.len(),
                self.config.window_len,
                self.config.input_features
            )));
        }
        Ok(())
    }

    fn normalized(&self, window: &[f64]) -> Vec<f64> {
        window.iter().map(|&v| self.normalizer.apply(v)).collect()
    }

    /// Probability that `window` (raw kWh, time-major) is malicious.
    pub fn predict(&self, window: &[f64]) -> Result<f64, DetectorError> {
        self.check_window(window)?;
        Ok(sigmoid(self.logit(&self.normalized(window))))
    }

    fn logit(&self, x: &[f64]) -> f64 {
        let fe = self.config.input_features;
        let steps: Vec<&[f64]> = x.chunks_exact(fe).collect();
        let hf = unroll(&self.forward, steps.iter().copied());
        let hb = unroll(&self.backward, steps.iter().rev().copied());
        let h = self.config.num_hidden_units;
        let last_f = &hf.last().expect("non-empty window").h;
        let last_b = &hb.last().expect("non-empty window").h;
        let mut z = self.head_bias;
        for k in 0..h {
            z += self.head_weights[k] * last_f[k] + self.head_weights[h + k] * last_b[k];
        }
        z
    }
}

/// Model output probability for one window.
pub fn forward(model: &BiLstmModel, window: &[f64]) -> Result<f64, DetectorError> {
    model.predict(window)
}

pub(crate) const P_CLIP: f64 = 1e-7;

/// Binary cross-entropy with the probability clipped to `[1e-7, 1 - 1e-7]`.
pub fn bce(p: f64, label: f64) -> f64 {
    let p = p.clamp(P_CLIP, 1.0 - P_CLIP);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Mean loss over `batch` and its gradient with respect to every parameter,
/// by backpropagation through time in both directions. Labels are 0 or 1.
pub fn loss_and_gradients(
    model: &BiLstmModel,
    batch: &[(&[f64], f64)],
) -> Result<(f64, BiLstmModel), DetectorError> {
    let mut grad = BiLstmModel::zeros(&model.config);
    grad.normalizer = model.normalizer;
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let h = model.config.num_hidden_units;
    let fe = model.config.input_features;
    let mut loss = 0.0;
    for (window, label) in batch {
        model.check_window(window)?;
        let x = model.normalized(window);
        let steps: Vec<&[f64]> = x.chunks_exact(fe).collect();
        let rev: Vec<&[f64]> = steps.iter().rev().copied().collect();
        let cf = unroll(&model.forward, steps.iter().copied());
        let cb = unroll(&model.backward, rev.iter().copied());
        let last_f = &cf.last().expect("non-empty").h;
        let last_b = &cb.last().expect("non-empty").h;
        let mut z = model.head_bias;
        for k in 0..h {
            z += model.head_weights[k] * last_f[k] + model.head_weights[h + k] * last_b[k];
        }
        let p = sigmoid(z);
        loss += bce(p, *label);
        // the clip makes the loss flat outside [1e-7, 1 - 1e-7]
        let dz = if (P_CLIP..=1.0 - P_CLIP).contains(&p) { p - label } else { 0.0 };
        if dz == 0.0 {
            continue;
        }
        grad.head_bias += dz;
        for k in 0..h {
            grad.head_weights[k] += dz * last_f[k];
            grad.head_weights[h + k] += dz * last_b[k];
        }
        let dh_f: Vec<f64> = (0..h).map(|k| dz * model.head_weights[k]).collect();
        let dh_b: Vec<f64> = (0..h).map(|k| dz * model.head_weights[h + k]).collect();
        backward(&model.forward, &steps, &cf, &dh_f, &mut grad.forward);
        backward(&model.backward, &rev, &cb, &dh_b, &mut grad.backward);
    }
    let inv = 1.0 / batch.len() as f64;
    grad.params_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad))
}

const MAGIC: &[u8; 4] = b"BLSM";
const VERSION: u16 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> std::io::Result<()> {
    w.write_all(&(v as u32).to_le_bytes())
}

fn get<const N: usize>(r: &mut impl Read) -> Result<[u8; N], DetectorError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| DetectorError::ModelFile(format!("truncated: {e}")))?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<usize, DetectorError> {
    Ok(u32::from_le_bytes(get(r)?) as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64, DetectorError> {
    Ok(f64::from_le_bytes(get(r)?))
}

impl BiLstmModel {
    /// Binary layout, little-endian: `BLSM`, version `u16`, hidden, window,
    /// features, epochs, batch size as `u32`, seed `u64`, learning rate,
    /// momentum, clip norm, normalizer mean and std as `f64`, then every
    /// parameter as `f64` in [`BiLstmModel::params`] order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DetectorError> {
        let c = &self.config;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for v in [c.num_hidden_units, c.window_len, c.input_features, c.epochs, c.batch_size] {
            put_u32(&mut w, v)?;
        }
        w.write_all(&c.seed.to_le_bytes())?;
        for v in [c.learning_rate, c.momentum, c.clip_norm, self.normalizer.mean, self.normalizer.std] {
            w.write_all(&v.to_le_bytes())?;
        }
        for p in self.params() {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, DetectorError> {
        if &get::<4>(&mut r)? != MAGIC {
            return Err(DetectorError::ModelFile("bad magic".into()));
        }
        let version = u16::from_le_bytes(get(&mut r)?);
        if version != VERSION {
            return Err(DetectorError::ModelFile(format!("unsupported version {version}")));
        }
        let num_hidden_units = get_u32(&mut r)?;
        let window_len = get_u32(&mut r)?;
        let input_features = get_u32(&mut r)?;
        let epochs = get_u32(&mut r)?;
        let batch_size = get_u32(&mut r)?;
        let seed = u64::from_le_bytes(get(&mut r)?);
        let config = DetectorConfig {
            num_hidden_units,
            window_len,
            input_features,
            epochs,
            batch_size,
            seed,
            learning_rate: get_f64(&mut r)?,
            momentum: get_f64(&mut r)?,
            clip_norm: get_f64(&mut r)?,
        };
        config.validate()?;
        let mut model = BiLstmModel::zeros(&config);
        model.normalizer = Normalizer { mean: get_f64(&mut r)?, std: get_f64(&mut r)? };
        let n = model.n_params();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(get_f64(&mut r)?);
        }
        for (p, v) in model.params_mut().zip(values) {
            *p = v;
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(DetectorError::ModelFile(format!("{} trailing bytes", rest.len())));
        }
        if !model.is_finite() {
            return Err(DetectorError::ModelFile("non-finite parameter".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), DetectorError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, DetectorError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
