//! Plaintext oracles shared by the integration suites.
#![allow(dead_code)]

use num_rational::Ratio;

/// Reading or price as an integer at `scale`, halves rounded away from zero.
pub fn fixed(x: f64, scale: u64) -> i128 {
    (x * scale as f64).round() as i128
}

/// Exact rational rounding of `num / den`, halves away from zero.
pub fn round_ratio(num: i128, den: i128) -> i128 {
    Ratio::new(num, den).round().to_integer()
}

/// Static bill at `scale`: `round(sum P_t R_t / scale)`.
pub fn static_bill(readings: &[f64], prices: &[f64], scale: u64) -> i128 {
    let sum: i128 = readings.iter().zip(prices).map(|(&r, &p)| fixed(r, scale) * fixed(p, scale)).sum();
    round_ratio(sum, scale as i128)
}

/// Dynamic bills at `scale`. The interval price carried at `scale^2` is
/// `B_t * S + K * A_t` with `A_t` the integer aggregate; the cost at `scale^3`
/// is divided once by `scale^2`.
pub fn dynamic_bills(readings: &[Vec<f64>], base: &[f64], k: f64, scale: u64) -> Vec<i128> {
    let s = scale as i128;
    let kk = fixed(k, scale);
    let ints: Vec<Vec<i128>> = readings.iter().map(|r| r.iter().map(|&x| fixed(x, scale)).collect()).collect();
    let agg: Vec<i128> = (0..base.len()).map(|t| ints.iter().map(|r| r[t]).sum()).collect();
    ints.iter()
        .map(|r| {
            let cost: i128 = (0..base.len()).map(|t| (fixed(base[t], scale) * s + kk * agg[t]) * r[t]).sum();
            round_ratio(cost, s * s)
        })
        .collect()
}

pub mod grad {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use smartbill::detector::{bce, forward, loss_and_gradients, BiLstmModel, DetectorConfig, Normalizer};

    pub const H: f64 = 1e-4;

    /// Relative error with the denominator floored, so that gradients at the
    /// level of finite-difference rounding noise do not dominate.
    pub fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
    }

    /// A random small model and one labelled window; returns the worst
    /// relative error over every parameter and the parameter count.
    pub fn check_pair(seed: u64) -> (f64, usize) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let features = rng.random_range(1..=2);
        let config = DetectorConfig {
            num_hidden_units: rng.random_range(2..=5),
            window_len: rng.random_range(1..=8),
            input_features: features,
            seed,
            ..DetectorConfig::default()
        };
        let mut model = BiLstmModel::init(&config);
        model.head_bias = rng.random_range(-0.5..0.5);
        model.normalizer = Normalizer { mean: rng.random_range(-1.0..1.0), std: rng.random_range(0.5..2.0) };
        let window: Vec<f64> =
            (0..config.window_len * features).map(|_| rng.random_range(-3.0..3.0)).collect();
        let label = rng.random_range(0..2) as f64;
        let batch = [(window.as_slice(), label)];
        let (_, grad) = loss_and_gradients(&model, &batch).unwrap();
        let loss = |m: &BiLstmModel| bce(forward(m, &window).unwrap(), label);
        let mut worst: f64 = 0.0;
        for (i, a) in grad.params().enumerate() {
            let mut plus = model.clone();
            *plus.params_mut().nth(i).unwrap() += H;
            let mut minus = model.clone();
            *minus.params_mut().nth(i).unwrap() -= H;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
            worst = worst.max(rel_err(*a, numeric));
        }
        (worst, model.n_params())
    }
}
