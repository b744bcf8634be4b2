//! A scripted adversary adds 1 to a share in transit. The batched MAC check
//! catches it and the period ends without bills.

use smartbill::billing::{BillingPeriod, Tariff};
use smartbill::ingest::{synthesize, DEFAULT_START};
use smartbill::simnet::{alerts_to_csv, run_billing_period, AdversaryScript, PeriodRequest};

const SCRIPT: &str = r#"[
  {"action": "tamper_share", "target": {"role": "compute_party", "id": 2}, "message_index": 1, "word": 5, "delta": 1}
]"#;

fn main() {
    let meters = synthesize(3, 1, 9);
    let period = BillingPeriod::days(DEFAULT_START, 1);
    let mut req = PeriodRequest::new(3, Tariff::flat(0.2, 48), period, &meters);

    let honest = run_billing_period(&req).unwrap();
    println!("honest run: {} bills, aborted = {}", honest.bills.len(), honest.aborted);

    req.adversary = AdversaryScript::from_json(SCRIPT).unwrap();
    let attacked = run_billing_period(&req).unwrap();
    for ev in &attacked.tamper_events {
        println!("tampered {} -> {} (round {}, word {})", ev.header.from, ev.header.to, ev.header.round, ev.word);
    }
    println!("attacked run: {} bills, aborted = {}", attacked.bills.len(), attacked.aborted);
    print!("{}", alerts_to_csv(&attacked.alerts));
}
