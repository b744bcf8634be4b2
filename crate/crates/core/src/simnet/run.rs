//! One simulated billing period: deal, distribute, share, bill, check, deliver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{AdversaryScript, Endpoint, MessageHeader, NetStats, Phase, SimError, SimNet, TamperEvent, Transport};
use crate::billing::{bill_dynamic, bill_static, share_readings, triples_required, BillStatement, BillingError, BillingPeriod, Tariff};
use crate::detector::{meter_probability, BiLstmModel};
use crate::field::{FixedPointCodec, MERSENNE_61, TOY_PRIME};
use crate::ingest::{inject_fraud, MeterSeries};
use crate::mpc::{offline_deal, Schedule, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    /// The MAC check or a message integrity check failed; no bill was released.
    TamperDetected,
    /// The detector scored a meter above the alert threshold.
    FraudSuspected,
}

impl AlertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertKind::TamperDetected => "tamper_detected",
            AlertKind::FraudSuspected => "fraud_suspected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub kind: AlertKind,
    pub period_id: String,
    pub client_id: Option<usize>,
    pub detail: String,
}

/// CSV report `period_id,kind,client_id,detail`.
pub fn alerts_to_csv(alerts: &[Alert]) -> String {
    let mut out = String::from("period_id,kind,client_id,detail\n");
    for a in alerts {
        let client = a.client_id.map(|c| c.to_string()).unwrap_or_default();
        let detail = a.detail.replace('"', "'");
        out.push_str(&format!("{},{},{client},\"{detail}\"\n", a.period_id, a.kind.as_str()));
    }
    out
}

/// Inputs of one period. Client `c` is `corpus[c]`, whose readings must start
/// at the period start and cover it.
#[derive(Debug, Clone)]
pub struct PeriodRequest<'a> {
    pub n_parties: usize,
    pub tariff: Tariff,
    pub period: BillingPeriod,
    pub corpus: &'a [MeterSeries],
    pub adversary: AdversaryScript,
    pub seed: u64,
    pub schedule: Schedule,
    pub timing: bool,
    pub codec: FixedPointCodec,
    /// Field modulus: `2^61 - 1` or the toy prime 251.
    pub modulus: u64,
    pub detector: Option<&'a BiLstmModel>,
    /// Meters with a mean window probability above this raise an alert.
    pub alert_threshold: f64,
}

impl<'a> PeriodRequest<'a> {
    pub fn new(n_parties: usize, tariff: Tariff, period: BillingPeriod, corpus: &'a [MeterSeries]) -> Self {
        PeriodRequest {
            n_parties,
            tariff,
            period,
            corpus,
            adversary: AdversaryScript::none(),
            seed: 0,
            schedule: Schedule::Sequential,
            timing: false,
            codec: FixedPointCodec::default(),
            modulus: MERSENNE_61,
            detector: None,
            alert_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PeriodOutcome {
    /// Empty when the period aborted.
    pub bills: Vec<BillStatement>,
    pub aborted: bool,
    pub stats: NetStats,
    pub alerts: Vec<Alert>,
    pub transcript_digest: String,
    pub tamper_events: Vec<TamperEvent>,
    /// Every delivered message, in delivery order.
    pub headers: Vec<MessageHeader>,
    /// Client series as billed, after any scripted fraud injection.
    pub billed_series: Vec<MeterSeries>,
}

/// Runs one period over a fresh [`SimNet`] in the field chosen by `req.modulus`.
///
/// Bill totals wrap modulo the prime; with the toy modulus they are only
/// meaningful for tiny inputs.
///
/// Tampering that is detected ends the period without bills and with a
/// `TamperDetected` alert; it is not an error. A tamper action whose target
/// message never travelled is a configuration error.
pub fn run_billing_period(req: &PeriodRequest<'_>) -> Result<PeriodOutcome, SimError> {
    match req.modulus {
        MERSENNE_61 => run_in::<MERSENNE_61>(req),
        TOY_PRIME => run_in::<TOY_PRIME>(req),
        other => Err(SimError::Config(format!(
            "unsupported modulus {other}; use {MERSENNE_61} or {TOY_PRIME}"
        ))),
    }
}

fn run_in<const P: u64>(req: &PeriodRequest<'_>) -> Result<PeriodOutcome, SimError> {
    let n_int = req.period.n_intervals;
    let period_id = req.period.id();
    let tariff = req.tariff.fit_to(n_int)?;
    let mode = tariff.mode();

    let mut series: Vec<MeterSeries> = Vec::with_capacity(req.corpus.len());
    for (c, s) in req.corpus.iter().enumerate() {
        if s.start != req.period.start || s.readings.len() < n_int {
            return Err(SimError::Config(format!(
                "client {c} ({}) does not cover period {period_id} of {n_int} intervals",
                s.meter_id
            )));
        }
        let mut cut = s.clone();
        cut.readings.truncate(n_int);
        if let Some(a) = cut.attack {
            if a.range_start >= n_int {
                cut.attack = None;
            }
        }
        series.push(cut);
    }
    for (client, attack) in req.adversary.frauds() {
        let s = series
            .get_mut(client)
            .ok_or_else(|| SimError::Config(format!("fraud injection targets unknown client {client}")))?;
        *s = inject_fraud(s, attack).map_err(|e| SimError::Config(e.to_string()))?;
    }

    let n_clients = series.len();
    if req.n_parties < 2 {
        return Err(SimError::Config(format!("at least two computation parties are required, got {}", req.n_parties)));
    }
    let mut net = SimNet::new().with_timing(req.timing).with_tampering(&req.adversary.tampers())?;
    let dealt = Instant::now();
    let material = offline_deal::<P>(n_clients * n_int, triples_required(n_clients, n_int, mode), req.n_parties, req.seed);
    if req.timing {
        net.charge_cpu(Endpoint::DEALER, Phase::Offline, dealt.elapsed());
    }

    let inputs_per_client = vec![n_int; n_clients];
    let result = {
        match Session::offline(&material, &inputs_per_client, &mut net, req.schedule, req.seed ^ 0x5eed) {
            Err(e) => Err(BillingError::from(e)),
            Ok(_) if n_clients == 0 => Ok(Vec::new()),
            Ok(mut session) => {
                let per_client: Vec<Vec<f64>> = series.iter().map(|s| s.readings.clone()).collect();
                share_readings(&mut session, &req.codec, &per_client).and_then(|shared| match &tariff {
                    Tariff::Static { .. } => bill_static(&mut session, &shared, &tariff, &req.period, &req.codec),
                    Tariff::Dynamic { .. } => bill_dynamic(&mut session, &shared, &tariff, &req.period, &req.codec),
                })
            }
        }
    };

    let mut alerts = Vec::new();
    let (bills, aborted) = match result {
        Ok(b) => (b, false),
        Err(BillingError::Aborted(reason)) => {
            alerts.push(Alert { kind: AlertKind::TamperDetected, period_id: period_id.clone(), client_id: None, detail: reason });
            (Vec::new(), true)
        }
        Err(e) => return Err(e.into()),
    };
    if !aborted {
        if let Some(t) = net.unfired_tampers().first() {
            return Err(SimError::Config(format!(
                "tamper target message {} of {} was never sent",
                t.message_index, t.target
            )));
        }
    }
    if let Some(model) = req.detector {
        for (c, s) in series.iter().enumerate() {
            let p = meter_probability(model, s).map_err(|e| SimError::Config(e.to_string()))?;
            if p > req.alert_threshold {
                alerts.push(Alert {
                    kind: AlertKind::FraudSuspected,
                    period_id: period_id.clone(),
                    client_id: Some(c),
                    detail: format!("meter {} scored {p:.3}", s.meter_id),
                });
            }
        }
    }

    Ok(PeriodOutcome {
        bills,
        aborted,
        transcript_digest: net.transcript_digest(),
        tamper_events: net.fired_tampers().to_vec(),
        headers: net.headers().to_vec(),
        stats: net.into_stats(),
        alerts,
        billed_series: series,
    })
}
