//! A single LSTM cell with input, forget and output gates and a tanh candidate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DetectorError;

/// Gate order used everywhere: parameters, gradients and the model file.
pub const GATES: [&str; 4] = ["input", "forget", "output", "candidate"];
pub(crate) const I: usize = 0;
pub(crate) const F: usize = 1;
pub(crate) const O: usize = 2;
pub(crate) const G: usize = 3;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights of one cell. `input_weights[g]` is `hidden x features` and
/// `recurrent_weights[g]` is `hidden x hidden`, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub hidden: usize,
    pub features: usize,
    pub input_weights: [Vec<f64>; 4],
    pub recurrent_weights: [Vec<f64>; 4],
    pub biases: [Vec<f64>; 4],
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, features: usize) -> Self {
        LstmCellParams {
            hidden,
            features,
            input_weights: std::array::from_fn(|_| vec![0.0; hidden * features]),
            recurrent_weights: std::array::from_fn(|_| vec![0.0; hidden * hidden]),
            biases: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }

    /// Uniform `+-1/sqrt(hidden)` weights, zero biases except forget = 1.
    pub fn init<R: Rng + ?Sized>(hidden: usize, features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(hidden, features);
        for g in 0..4 {
            p.input_weights[g].iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
            p.recurrent_weights[g].iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        }
        p.biases[F].iter_mut().for_each(|b| *b = 1.0);
        p
    }

    pub fn n_params(&self) -> usize {
        4 * (self.hidden * self.features + self.hidden * self.hidden + self.hidden)
    }

    /// Parameters in storage order: all input weights, all recurrent weights, all biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.input_weights
            .iter()
            .chain(&self.recurrent_weights)
            .chain(&self.biases)
            .flat_map(|v| v.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.input_weights
            .iter_mut()
            .chain(&mut self.recurrent_weights)
            .chain(&mut self.biases)
            .flat_map(|v| v.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    fn check(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<(), DetectorError> {
        if x.len() != self.features || h.len() != self.hidden || c.len() != self.hidden {
            return Err(DetectorError::ShapeMismatch(format!(
                "cell expects x[{}], h[{}], c[{}]; got x[{}], h[{}], c[{}]",
                self.features,
                self.hidden,
                self.hidden,
                x.len(),
                h.len(),
                c.len()
            )));
        }
        Ok(())
    }
}

/// Activations of one step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// Post-activation gates: i, f, o (sigmoid) and g (tanh).
    pub gates: [Vec<f64>; 4],
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn step_cached(cell: &LstmCellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let hn = cell.hidden;
    let fe = cell.features;
    let mut gates: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hn]);
    for (g, out) in gates.iter_mut().enumerate() {
        let wx = &cell.input_weights[g];
        let wh = &cell.recurrent_weights[g];
        let b = &cell.biases[g];
        for r in 0..hn {
            let mut acc = b[r];
            let row_x = &wx[r * fe..(r + 1) * fe];
            for k in 0..fe {
                acc += row_x[k] * x[k];
            }
            let row_h = &wh[r * hn..(r + 1) * hn];
            for k in 0..hn {
                acc += row_h[k] * h_prev[k];
            }
            out[r] = if g == G { acc.tanh() } else { sigmoid(acc) };
        }
    }
    let mut c = vec![0.0; hn];
    let mut tanh_c = vec![0.0; hn];
    let mut h = vec![0.0; hn];
    for r in 0..hn {
        c[r] = gates[F][r] * c_prev[r] + gates[I][r] * gates[G][r];
        tanh_c[r] = c[r].tanh();
        h[r] = gates[O][r] * tanh_c[r];
    }
    StepCache { gates, c, tanh_c, h }
}

/// One recurrence step: returns `(h_t, c_t)`.
pub fn lstm_step(
    cell: &LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), DetectorError> {
    cell.check(x, h_prev, c_prev)?;
    let s = step_cached(cell, x, h_prev, c_prev);
    Ok((s.h, s.c))
}

/// Runs the cell over `steps` (each `features` long) from a zero state and
/// returns every step's cache.
pub(crate) fn unroll<'a>(cell: &LstmCellParams, steps: impl Iterator<Item = &'a [f64]>) -> Vec<StepCache> {
    let mut h = vec![0.0; cell.hidden];
    let mut c = vec![0.0; cell.hidden];
    let mut out = Vec::new();
    for x in steps {
        let s = step_cached(cell, x, &h, &c);
        h.clone_from(&s.h);
        c.clone_from(&s.c);
        out.push(s);
    }
    out
}

/// Backpropagation through time for one direction.
///
/// `inputs[t]` is the input seen at step `t` of this direction, `dh_last` the
/// loss gradient with respect to the final hidden state. Gradients are added
/// into `grad`.
pub(crate) fn backward(
    cell: &LstmCellParams,
    inputs: &[&[f64]],
    caches: &[StepCache],
    dh_last: &[f64],
    grad: &mut LstmCellParams,
) {
    let hn = cell.hidden;
    let fe = cell.features;
    let zeros = vec![0.0; hn];
    let mut dh = dh_last.to_vec();
    let mut dc = vec![0.0; hn];
    let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hn]);
    for t in (0..caches.len()).rev() {
        let s = &caches[t];
        let (h_prev, c_prev) = if t == 0 { (&zeros, &zeros) } else { (&caches[t - 1].h, &caches[t - 1].c) };
        for r in 0..hn {
            let (i, f, o, g) = (s.gates[I][r], s.gates[F][r], s.gates[O][r], s.gates[G][r]);
            let d_o = dh[r] * s.tanh_c[r];
            let dcr = dc[r] + dh[r] * o * (1.0 - s.tanh_c[r] * s.tanh_c[r]);
            da[I][r] = dcr * g * i * (1.0 - i);
            da[F][r] = dcr * c_prev[r] * f * (1.0 - f);
            da[O][r] = d_o * o * (1.0 - o);
            da[G][r] = dcr * i * (1.0 - g * g);
            dc[r] = dcr * f;
        }
        let x = inputs[t];
        let mut dh_prev = vec![0.0; hn];
        for (g, da_g) in da.iter().enumerate() {
            let wh = &cell.recurrent_weights[g];
            let gx = &mut grad.input_weights[g];
            for r in 0..hn {
                let a = da_g[r];
                if a == 0.0 {
                    continue;
                }
                for k in 0..fe {
                    gx[r * fe + k] += a * x[k];
                }
                grad.biases[g][r] += a;
            }
            let gh = &mut grad.recurrent_weights[g];
            for r in 0..hn {
                let a = da_g[r];
                if a == 0.0 {
                    continue;
                }
                let row = &wh[r * hn..(r + 1) * hn];
                let grow = &mut gh[r * hn..(r + 1) * hn];
                for k in 0..hn {
                    grow[k] += a * h_prev[k];
                    dh_prev[k] += row[k] * a;
                }
            }
        }
        dh = dh_prev;
    }
}
