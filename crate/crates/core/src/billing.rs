//! Billing over secret-shared meter readings.
//!
//! Static time-of-use bills are public-coefficient dot products and need no
//! triples. Dynamic congestion bills price each interval linearly in the
//! secret neighbourhood load, `p_t = base_t + k * agg_t`, and multiply that
//! shared price with each reading through Beaver triples. Every bill total is
//! opened, MAC-checked and only then delivered to the client and the supplier.

use std::fmt;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, FixedPointCodec, Fp};
use crate::mpc::{MacCheck, MpcError, OpenKind, Session, Shared};
use crate::simnet::Endpoint;

/// Intervals per day at 30-minute resolution.
pub const INTERVALS_PER_DAY: usize = 48;

#[derive(Debug, Error)]
pub enum BillingError {
    #[error("billing period aborted: {0}")]
    Aborted(String),
    #[error("invalid tariff: {0}")]
    Tariff(String),
    #[error("client {client} has {got} readings, period has {expected} intervals")]
    LengthMismatch { client: usize, got: usize, expected: usize },
    #[error("at least one client is required")]
    NoClients,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Mpc(MpcError),
}

impl From<MpcError> for BillingError {
    fn from(e: MpcError) -> Self {
        match e {
            MpcError::Malformed { .. } | MpcError::OutputMismatch(_) => BillingError::Aborted(e.to_string()),
            other => BillingError::Mpc(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TariffMode {
    Static,
    Dynamic,
}

impl TariffMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TariffMode::Static => "static",
            TariffMode::Dynamic => "dynamic",
        }
    }
}

impl std::str::FromStr for TariffMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "static" => Ok(TariffMode::Static),
            "dynamic" => Ok(TariffMode::Dynamic),
            other => Err(format!("unknown billing mode `{other}`")),
        }
    }
}

/// Public tariff. Prices are in currency units per kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Tariff {
    Static {
        interval_prices: Vec<f64>,
    },
    /// `price_t = base_prices[t] + k * aggregate_load_t`; `capacity` is the
    /// feeder's rated load in kWh per interval, carried for reporting.
    Dynamic {
        base_prices: Vec<f64>,
        k: f64,
        capacity: f64,
    },
}

impl Tariff {
    pub fn flat(price: f64, n_intervals: usize) -> Self {
        Tariff::Static { interval_prices: vec![price; n_intervals] }
    }

    pub fn mode(&self) -> TariffMode {
        match self {
            Tariff::Static { .. } => TariffMode::Static,
            Tariff::Dynamic { .. } => TariffMode::Dynamic,
        }
    }

    fn prices(&self) -> &[f64] {
        match self {
            Tariff::Static { interval_prices } => interval_prices,
            Tariff::Dynamic { base_prices, .. } => base_prices,
        }
    }

    pub fn n_intervals(&self) -> usize {
        self.prices().len()
    }

    pub fn validate(&self) -> Result<(), BillingError> {
        if self.prices().is_empty() {
            return Err(BillingError::Tariff("no interval prices".into()));
        }
        if let Some(p) = self.prices().iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(BillingError::Tariff(format!("price {p} is negative or not finite")));
        }
        if let Tariff::Dynamic { k, capacity, .. } = self {
            if !k.is_finite() || *k < 0.0 {
                return Err(BillingError::Tariff(format!("congestion coefficient {k} must be >= 0")));
            }
            if !capacity.is_finite() || *capacity < 0.0 {
                return Err(BillingError::Tariff(format!("capacity {capacity} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Stretches a one-day (or any divisor-length) profile over `n_intervals`.
    pub fn fit_to(&self, n_intervals: usize) -> Result<Tariff, BillingError> {
        let len = self.n_intervals();
        if len == 0 || !n_intervals.is_multiple_of(len) {
            return Err(BillingError::Tariff(format!(
                "{len} tariff intervals cannot cover a {n_intervals}-interval period"
            )));
        }
        let tile = |v: &[f64]| v.iter().copied().cycle().take(n_intervals).collect::<Vec<_>>();
        Ok(match self {
            Tariff::Static { interval_prices } => Tariff::Static { interval_prices: tile(interval_prices) },
            Tariff::Dynamic { base_prices, k, capacity } => {
                Tariff::Dynamic { base_prices: tile(base_prices), k: *k, capacity: *capacity }
            }
        })
    }

    pub fn from_json(text: &str) -> Result<Self, BillingError> {
        let t: Tariff = serde_json::from_str(text).map_err(|e| BillingError::Tariff(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillingPeriod {
    pub start: DateTime<Utc>,
    pub n_intervals: usize,
}

impl BillingPeriod {
    pub fn new(start: DateTime<Utc>, n_intervals: usize) -> Self {
        assert!(n_intervals > 0, "a billing period has at least one interval");
        BillingPeriod { start, n_intervals }
    }

    pub fn days(start: DateTime<Utc>, days: usize) -> Self {
        Self::new(start, days * INTERVALS_PER_DAY)
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.start + Duration::minutes(30 * self.n_intervals as i64)
    }

    pub fn id(&self) -> String {
        self.start.format("%Y-%m-%d").to_string()
    }
}

/// A fixed-point currency amount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Amount {
    pub scaled: i128,
    pub scale: u64,
}

impl Amount {
    pub fn to_f64(self) -> f64 {
        self.scaled as f64 / self.scale as f64
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = (self.scale as f64).log10().round() as u32;
        if 10u64.pow(digits) != self.scale {
            return write!(f, "{}", self.to_f64());
        }
        let sign = if self.scaled < 0 { "-" } else { "" };
        let abs = self.scaled.unsigned_abs();
        let unit = self.scale as u128;
        if digits == 0 {
            write!(f, "{sign}{abs}")
        } else {
            write!(f, "{sign}{}.{:0width$}", abs / unit, abs % unit, width = digits as usize)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BillStatement {
    pub client_id: usize,
    pub period_id: String,
    pub total: Amount,
    /// Always `Pass`: statements exist only after a successful MAC check.
    #[serde(skip)]
    pub mac_check: Option<MacCheck>,
    pub disclosed_to: Vec<Endpoint>,
}

impl BillStatement {
    pub fn mac_passed(&self) -> bool {
        self.mac_check == Some(MacCheck::Pass)
    }
}

/// CSV report `client_id,period_id,total,mac_check`.
pub fn bills_to_csv(bills: &[BillStatement]) -> String {
    let mut out = String::from("client_id,period_id,total,mac_check\n");
    for b in bills {
        let check = if b.mac_passed() { "pass" } else { "fail" };
        out.push_str(&format!("{},{},{},{}\n", b.client_id, b.period_id, b.total, check));
    }
    out
}

pub fn triples_required(n_clients: usize, n_intervals: usize, mode: TariffMode) -> usize {
    match mode {
        TariffMode::Static => 0,
        TariffMode::Dynamic => n_clients * n_intervals,
    }
}

/// Encodes kWh readings at the codec scale.
pub fn encode_readings<const P: u64>(codec: &FixedPointCodec, readings: &[f64]) -> Result<Vec<Fp<P>>, BillingError> {
    Ok(readings.iter().map(|&r| codec.encode(r)).collect::<Result<_, _>>()?)
}

/// Each client secret-shares its readings with the computation parties (one round).
pub fn share_readings<const P: u64>(
    session: &mut Session<'_, P>,
    codec: &FixedPointCodec,
    per_client: &[Vec<f64>],
) -> Result<Vec<Vec<Shared<P>>>, BillingError> {
    let inputs = per_client
        .iter()
        .enumerate()
        .map(|(c, r)| Ok((c, encode_readings(codec, r)?)))
        .collect::<Result<Vec<_>, BillingError>>()?;
    Ok(session.input_many(&inputs)?)
}

fn check_lengths<const P: u64>(readings: &[Vec<Shared<P>>], n: usize) -> Result<(), BillingError> {
    for (client, r) in readings.iter().enumerate() {
        if r.len() != n {
            return Err(BillingError::LengthMismatch { client, got: r.len(), expected: n });
        }
    }
    Ok(())
}

/// Local sum of the `t`-th reading over all clients.
pub fn shared_aggregate<const P: u64>(readings: &[Vec<Shared<P>>], t: usize, n_parties: usize) -> Shared<P> {
    let mut acc = Shared::zero(n_parties);
    for r in readings {
        acc.add_scaled(&r[t], Fp::ONE).expect("shares come from one session");
    }
    acc
}

fn finish<const P: u64>(
    session: &mut Session<'_, P>,
    totals: &[Shared<P>],
    period: &BillingPeriod,
    codec: &FixedPointCodec,
    degree: u32,
) -> Result<Vec<BillStatement>, BillingError> {
    if totals.is_empty() {
        return Ok(Vec::new());
    }
    let opened = session.open_many(totals, OpenKind::Output)?;
    if session.check_macs()? == MacCheck::Fail {
        return Err(BillingError::Aborted("MAC check failed".into()));
    }
    let recipients: Vec<[Endpoint; 2]> =
        (0..totals.len()).map(|c| [Endpoint::client(c), Endpoint::SUPPLIER]).collect();
    let routed: Vec<_> = opened.iter().zip(&recipients).map(|(o, r)| (o, &r[..])).collect();
    let values = session.deliver(&routed)?;
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(client_id, v)| BillStatement {
            client_id,
            period_id: period.id(),
            total: Amount { scaled: codec.rescale(v.to_signed(), degree), scale: codec.scale },
            mac_check: Some(MacCheck::Pass),
            disclosed_to: recipients[client_id].to_vec(),
        })
        .collect())
}

/// Static time-of-use bills: `sum_t price_t * r_t` per client, zero triples.
///
/// Totals carry `scale^2` and are rescaled once, half away from zero.
pub fn bill_static<const P: u64>(
    session: &mut Session<'_, P>,
    readings: &[Vec<Shared<P>>],
    tariff: &Tariff,
    period: &BillingPeriod,
    codec: &FixedPointCodec,
) -> Result<Vec<BillStatement>, BillingError> {
    let Tariff::Static { interval_prices } = tariff else {
        return Err(BillingError::Tariff("static billing needs a static tariff".into()));
    };
    tariff.validate()?;
    if interval_prices.len() != period.n_intervals {
        return Err(BillingError::Tariff(format!(
            "{} prices for a {}-interval period",
            interval_prices.len(),
            period.n_intervals
        )));
    }
    check_lengths(readings, period.n_intervals)?;
    let prices = encode_readings::<P>(codec, interval_prices)?;
    let n = session.n_parties();
    let totals = session.charge_local(|| {
        readings
            .iter()
            .map(|r| {
                let mut acc = Shared::zero(n);
                for (s, &p) in r.iter().zip(&prices) {
                    acc.add_scaled(s, p)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>, MpcError>>()
    })?;
    finish(session, &totals, period, codec, 2)
}

/// Dynamic congestion bills.
///
/// The shared per-interval price is `base_t * scale + k * [agg_t]` at
/// `scale^2`; its Beaver product with each reading lands at `scale^3` and the
/// opened total is rescaled by `scale^2`. Consumes one triple per client and
/// interval, client-major.
pub fn bill_dynamic<const P: u64>(
    session: &mut Session<'_, P>,
    readings: &[Vec<Shared<P>>],
    tariff: &Tariff,
    period: &BillingPeriod,
    codec: &FixedPointCodec,
) -> Result<Vec<BillStatement>, BillingError> {
    let Tariff::Dynamic { base_prices, k, .. } = tariff else {
        return Err(BillingError::Tariff("dynamic billing needs a dynamic tariff".into()));
    };
    tariff.validate()?;
    let n_int = period.n_intervals;
    if base_prices.len() != n_int {
        return Err(BillingError::Tariff(format!("{} base prices for a {n_int}-interval period", base_prices.len())));
    }
    check_lengths(readings, n_int)?;
    let needed = triples_required(readings.len(), n_int, TariffMode::Dynamic);
    if session.triples().remaining() < needed {
        return Err(BillingError::Mpc(MpcError::TriplesExhausted));
    }
    let scale = Fp::<P>::new(codec.scale);
    let bases = encode_readings::<P>(codec, base_prices)?;
    let k_enc: Fp<P> = codec.encode(*k)?;
    let keys = session.key_shares();
    let n = session.n_parties();

    let prices: Vec<Shared<P>> = session.charge_local(|| {
        (0..n_int)
            .map(|t| shared_aggregate(readings, t, n).mul_public(k_enc).add_public(bases[t] * scale, &keys))
            .collect()
    });
    let pairs: Vec<(&Shared<P>, &Shared<P>)> = readings
        .iter()
        .flat_map(|r| r.iter().zip(&prices).map(|(x, p)| (p, x)))
        .collect();
    let costs = session.beaver_mul_many(&pairs)?;
    let totals = session.charge_local(|| {
        costs
            .chunks(n_int.max(1))
            .map(|chunk| {
                let mut acc = Shared::zero(n);
                for c in chunk {
                    acc.add_scaled(c, Fp::ONE)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>, MpcError>>()
    })?;
    finish(session, &totals, period, codec, 3)
}

/// Opens the neighbourhood load of each requested interval after a MAC check
/// and delivers it to the supplier. Individual readings are never opened; with
/// a single client the aggregate is that client's reading.
pub fn aggregate_load<const P: u64>(
    session: &mut Session<'_, P>,
    readings: &[Vec<Shared<P>>],
    intervals: &[usize],
) -> Result<Vec<Fp<P>>, BillingError> {
    if readings.is_empty() {
        return Err(BillingError::NoClients);
    }
    let n = session.n_parties();
    let aggs: Vec<Shared<P>> = intervals.iter().map(|&t| shared_aggregate(readings, t, n)).collect();
    let opened = session.open_many(&aggs, OpenKind::Aggregate)?;
    if session.check_macs()? == MacCheck::Fail {
        return Err(BillingError::Aborted("MAC check failed".into()));
    }
    let to = [Endpoint::SUPPLIER];
    let routed: Vec<_> = opened.iter().map(|o| (o, &to[..])).collect();
    Ok(session.deliver(&routed)?)
}
