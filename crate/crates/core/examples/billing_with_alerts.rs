//! The supplier runs a trained detector alongside billing; meters that look
//! like theft get a `fraud_suspected` alert next to their bill.

use smartbill::billing::{BillingPeriod, Tariff};
use smartbill::detector::{meter_probability, train, Dataset, DetectorConfig};
use smartbill::ingest::{generate_corpus, DEFAULT_START};
use smartbill::simnet::{alerts_to_csv, run_billing_period, PeriodRequest};

fn main() {
    let days = 7;
    let (history, _) = generate_corpus(60, days, 0.3, 3).unwrap();
    let config = DetectorConfig::default();
    let (model, _) = train(&Dataset::from_series(&history, config.window_len), &config).unwrap();

    let (current, manifest) = generate_corpus(8, days, 0.25, 77).unwrap();
    let mut req = PeriodRequest::new(3, Tariff::flat(0.18, 48), BillingPeriod::days(DEFAULT_START, days), &current);
    req.detector = Some(&model);
    let out = run_billing_period(&req).unwrap();

    for r in &manifest.attack_roster {
        println!("ground truth: {} {:?}", r.meter_id, r.attack.kind);
    }
    for b in &out.bills {
        let meter = &current[b.client_id];
        let score = meter_probability(&model, meter).unwrap();
        println!("{}  bill {:>7}  score {score:.3}", meter.meter_id, b.total.to_string());
    }
    print!("{}", alerts_to_csv(&out.alerts));
}
