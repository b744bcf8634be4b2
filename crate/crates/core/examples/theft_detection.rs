//! Train the Bi-LSTM detector on a synthetic corpus with injected theft and
//! report metrics on held-out meters.
//!
//! ```bash
//! cargo run --release -p smartbill --example theft_detection -- 60 10
//! ```
//! Arguments: number of meters (default 60) and days (default 10).

use smartbill::detector::{evaluate, split_meters, train, Dataset, DetectorConfig};
use smartbill::ingest::generate_corpus;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let n_meters = args.next().unwrap_or(60);
    let days = args.next().unwrap_or(10);

    let (corpus, manifest) = generate_corpus(n_meters, days, 0.3, 42).unwrap();
    println!("{n_meters} meters x {days} days, {} with injected theft", manifest.attack_roster.len());
    let (train_ix, test_ix) = split_meters(&corpus, 0.3, 42);
    let pick = |ix: &[usize]| ix.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>();

    let config = DetectorConfig::default();
    let train_set = Dataset::from_series(&pick(&train_ix), config.window_len);
    let test_set = Dataset::from_series(&pick(&test_ix), config.window_len);
    let (model, report) = train(&train_set, &config).unwrap();
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {epoch:>2}  loss {loss:.4}");
    }
    println!("train: {}", evaluate(&model, &train_set, 0.5).unwrap());
    println!("test:  {}", evaluate(&model, &test_set, 0.5).unwrap());
}
