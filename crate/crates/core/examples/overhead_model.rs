//! Measured traffic of real runs next to the closed-form model.

use smartbill::billing::{BillingPeriod, Tariff, TariffMode};
use smartbill::ingest::{synthesize, DEFAULT_START};
use smartbill::simnet::{predict_bytes, run_billing_period, Endpoint, PeriodRequest, Phase};

fn main() {
    println!("{:>3} {:>4} {:>2} {:>8} {:>10} {:>10} {:>8} {:>8}", "C", "T", "n", "mode", "measured", "modeled", "upload", "p0 online");
    for (c, t, n) in [(1, 48, 2), (1, 48, 3), (10, 48, 3), (10, 96, 3), (10, 96, 5)] {
        let meters = synthesize(c, t / 48, 1);
        for mode in [TariffMode::Static, TariffMode::Dynamic] {
            let tariff = match mode {
                TariffMode::Static => Tariff::flat(0.2, t),
                TariffMode::Dynamic => Tariff::Dynamic { base_prices: vec![0.2; t], k: 0.001, capacity: 50.0 },
            };
            let out = run_billing_period(&PeriodRequest::new(n, tariff, BillingPeriod::new(DEFAULT_START, t), &meters)).unwrap();
            let model = predict_bytes(c, t, n, mode);
            assert!(model.matches(&out.stats));
            println!(
                "{c:>3} {t:>4} {n:>2} {:>8} {:>10} {:>10} {:>8} {:>8}",
                mode.as_str(),
                out.stats.total_sent(),
                model.total_bytes(),
                out.stats.endpoint_total(Endpoint::client(0)).bytes_sent,
                out.stats.get(Endpoint::party(0), Phase::Online).bytes_sent,
            );
        }
    }
}
