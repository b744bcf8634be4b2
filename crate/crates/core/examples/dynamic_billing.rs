//! Congestion pricing: each interval's price rises with the neighbourhood
//! load, which stays secret-shared. Only the aggregate is ever opened, and
//! only through `aggregate_load`.

use smartbill::billing::{aggregate_load, bill_dynamic, share_readings, triples_required, BillingPeriod, Tariff, TariffMode};
use smartbill::field::{FixedPointCodec, MERSENNE_61};
use smartbill::ingest::DEFAULT_START;
use smartbill::mpc::{offline_deal, Schedule, Session};
use smartbill::simnet::SimNet;

fn main() {
    let readings = vec![vec![0.4, 2.0, 1.1, 0.3], vec![0.2, 1.5, 2.5, 0.6], vec![0.9, 0.8, 0.9, 0.5]];
    let n_int = readings[0].len();
    let tariff = Tariff::Dynamic { base_prices: vec![0.10, 0.20, 0.20, 0.10], k: 0.02, capacity: 5.0 };
    let period = BillingPeriod::new(DEFAULT_START, n_int);
    let codec = FixedPointCodec::default();

    let triples = triples_required(readings.len(), n_int, TariffMode::Dynamic);
    let material = offline_deal::<MERSENNE_61>(readings.len() * n_int, triples, 3, 1);
    let mut net = SimNet::new();
    let mut session = Session::offline(&material, &[n_int; 3], &mut net, Schedule::Sequential, 1).unwrap();
    let shared = share_readings(&mut session, &codec, &readings).unwrap();

    let bills = bill_dynamic(&mut session, &shared, &tariff, &period, &codec).unwrap();
    for b in &bills {
        println!("client {} pays {}", b.client_id, b.total);
    }
    // the supplier may learn the feeder load, never the individual readings
    let loads = aggregate_load(&mut session, &shared, &[1, 2]).unwrap();
    for (t, l) in [1, 2].iter().zip(loads) {
        println!("interval {t}: neighbourhood load {} kWh", codec.decode(l));
    }
    println!("{triples} triples consumed, {} values opened", session.open_log().len());
}
