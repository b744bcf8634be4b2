//! Time-of-use billing of a small neighbourhood for one week, compared with
//! the same bill computed in the clear.

use smartbill::billing::{BillingPeriod, Tariff};
use smartbill::ingest::{synthesize, DEFAULT_START};
use smartbill::pipeline::time_of_use_prices;
use smartbill::simnet::{run_billing_period, PeriodRequest};

fn main() {
    let days = 7;
    let meters = synthesize(5, days, 2024);
    let period = BillingPeriod::days(DEFAULT_START, days);
    let tariff = Tariff::Static { interval_prices: time_of_use_prices() }.fit_to(period.n_intervals).unwrap();
    let Tariff::Static { interval_prices } = &tariff else { unreachable!() };

    let outcome = run_billing_period(&PeriodRequest::new(3, tariff.clone(), period, &meters)).unwrap();
    println!("period {} ({} intervals)", period.id(), period.n_intervals);
    for (bill, meter) in outcome.bills.iter().zip(&meters) {
        let clear: f64 = meter.readings.iter().zip(interval_prices).map(|(r, p)| r * p).sum();
        println!("{}  mpc {:>8}  clear {clear:>10.4}", meter.meter_id, bill.total.to_string());
    }
}
