//! Subcommands behind the `smartbill` binary: corpus generation, billing,
//! detector training and evaluation, and overhead sweeps.
//!
//! Each command takes a [`RunConfig`] and writes its outputs, plus the resolved
//! config as `run_config.json`, into `config.out`. Rerunning with that file
//! reproduces every output byte for byte (CPU timings excepted, which are only
//! recorded when `timing` is set).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::billing::{bills_to_csv, BillingError, BillingPeriod, Tariff, TariffMode, INTERVALS_PER_DAY};
use crate::detector::{evaluate, metrics_to_csv, split_meters, train, BiLstmModel, Dataset, DetectorConfig, DetectorError};
use crate::field::{FixedPointCodec, MERSENNE_61};
use crate::ingest::{generate_corpus, load_csv, synthesize, write_csv, CorpusManifest, IngestError, MeterSeries, NIGHT_SLOTS};
use crate::mpc::Schedule;
use crate::simnet::{alerts_to_csv, predict_bytes, run_billing_period, AdversaryScript, Endpoint, Phase, PeriodRequest, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;
pub const EXIT_DATA: i32 = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("billing aborted: {0}")]
    Aborted(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Failure(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => EXIT_CONFIG,
            PipelineError::Aborted(_) => EXIT_ABORTED,
            PipelineError::Data(_) => EXIT_DATA,
            PipelineError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => PipelineError::Config(m),
            SimError::Billing(BillingError::Aborted(m)) => PipelineError::Aborted(m),
            SimError::Billing(b @ (BillingError::Tariff(_) | BillingError::NoClients)) => PipelineError::Config(b.to_string()),
            SimError::Billing(b @ (BillingError::Field(_) | BillingError::LengthMismatch { .. })) => PipelineError::Data(b.to_string()),
            other => PipelineError::Failure(other.to_string()),
        }
    }
}

impl From<DetectorError> for PipelineError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::Config(m) => PipelineError::Config(m),
            DetectorError::Diverged(_) => PipelineError::Failure(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Failure(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GenData,
    Bill,
    Train,
    Eval,
    Bench,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Bill => "bill",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Bench => "bench",
        }
    }
}

/// Synthetic corpus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_meters: usize,
    pub days: usize,
    pub fraud_fraction: f64,
    /// Load readings from this CSV instead of synthesizing.
    pub csv: Option<PathBuf>,
    /// Ground-truth labels for a CSV corpus.
    pub manifest: Option<PathBuf>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { n_meters: 200, days: 30, fraud_fraction: 0.3, csv: None, manifest: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BillConfig {
    /// Bill the first `n_clients` meters; all when absent.
    pub n_clients: Option<usize>,
    /// Billing period length in days; the longest complete span when absent.
    pub days: Option<usize>,
    /// Explicit tariff; the built-in time-of-use profile when absent.
    pub tariff: Option<Tariff>,
    pub adversary: AdversaryScript,
    /// Detector model used to raise fraud alerts.
    pub model: Option<PathBuf>,
    pub alert_threshold: f64,
}

impl Default for BillConfig {
    fn default() -> Self {
        BillConfig {
            n_clients: None,
            days: None,
            tariff: None,
            adversary: AdversaryScript::none(),
            model: None,
            alert_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub detector: DetectorConfig,
    pub test_fraction: f64,
    pub threshold: f64,
    /// Model to evaluate; `<out>/model.blsm` when absent.
    pub model: Option<PathBuf>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig { detector: DetectorConfig::default(), test_fraction: 0.3, threshold: 0.5, model: None }
    }
}

/// Cartesian sweep; every combination is one billing period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_clients: Vec<usize>,
    pub n_intervals: Vec<usize>,
    pub n_parties: Vec<usize>,
    pub modes: Vec<TariffMode>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_clients: vec![1, 10],
            n_intervals: vec![48, 96, 192],
            n_parties: vec![2, 3],
            modes: vec![TariffMode::Static, TariffMode::Dynamic],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub out: PathBuf,
    pub modulus: u64,
    pub parties: usize,
    pub mode: TariffMode,
    pub schedule: Schedule,
    pub fixed_point_scale: u64,
    /// Record per-endpoint CPU time; makes `cpu_micros` columns nondeterministic.
    pub timing: bool,
    pub corpus: CorpusConfig,
    pub bill: BillConfig,
    pub detect: DetectConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            seed: 42,
            out: PathBuf::from("out"),
            modulus: MERSENNE_61,
            parties: 3,
            mode: TariffMode::Static,
            schedule: Schedule::Sequential,
            fixed_point_scale: 1000,
            timing: false,
            corpus: CorpusConfig::default(),
            bill: BillConfig::default(),
            detect: DetectConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.parties < 2 {
            return Err(PipelineError::Config(format!("at least two parties are required, got {}", self.parties)));
        }
        if self.fixed_point_scale == 0 {
            return Err(PipelineError::Config("fixed-point scale must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.corpus.fraud_fraction) {
            return Err(PipelineError::Config("fraud fraction must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.detect.test_fraction) {
            return Err(PipelineError::Config("test fraction must lie in [0, 1)".into()));
        }
        self.detect.detector.validate()?;
        Ok(())
    }

    fn codec(&self) -> FixedPointCodec {
        FixedPointCodec::new(self.fixed_point_scale)
    }
}

/// Day profile: off-peak 00:00-07:00, peak 17:00-21:00, shoulder otherwise.
pub fn time_of_use_prices() -> Vec<f64> {
    (0..INTERVALS_PER_DAY)
        .map(|slot| match slot {
            s if s < NIGHT_SLOTS => 0.08,
            34..=41 => 0.30,
            _ => 0.15,
        })
        .collect()
}

pub fn default_tariff(mode: TariffMode) -> Tariff {
    match mode {
        TariffMode::Static => Tariff::Static { interval_prices: time_of_use_prices() },
        TariffMode::Dynamic => Tariff::Dynamic { base_prices: time_of_use_prices(), k: 0.002, capacity: 100.0 },
    }
}

fn write(out: &Path, name: &str, contents: &str) -> Result<(), PipelineError> {
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))
}

fn prepare(cfg: &RunConfig, command: Command) -> Result<RunConfig, PipelineError> {
    cfg.validate()?;
    let mut resolved = cfg.clone();
    resolved.command = Some(command);
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    write(&cfg.out, "run_config.json", &resolved.to_json())?;
    Ok(resolved)
}

/// Loads or synthesizes the corpus described by `cfg.corpus`.
pub fn load_corpus(cfg: &RunConfig) -> Result<Vec<MeterSeries>, PipelineError> {
    let c = &cfg.corpus;
    match &c.csv {
        Some(path) => {
            let series = load_csv(path)?;
            match &c.manifest {
                Some(m) => {
                    let text = fs::read_to_string(m).map_err(|e| PipelineError::Data(format!("{}: {e}", m.display())))?;
                    let manifest: CorpusManifest =
                        serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("manifest: {e}")))?;
                    Ok(manifest.label(series)?)
                }
                None => Ok(series),
            }
        }
        None => Ok(generate_corpus(c.n_meters, c.days, c.fraud_fraction, cfg.seed)?.0),
    }
}

pub struct GenDataOutput {
    pub series: Vec<MeterSeries>,
    pub manifest: CorpusManifest,
}

/// Writes `corpus.csv` and `manifest.json`.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<GenDataOutput, PipelineError> {
    prepare(cfg, Command::GenData)?;
    let c = &cfg.corpus;
    let (series, manifest) = generate_corpus(c.n_meters, c.days, c.fraud_fraction, cfg.seed)?;
    write(&cfg.out, "corpus.csv", &write_csv(&series))?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(&cfg.out, "manifest.json", &json)?;
    Ok(GenDataOutput { series, manifest })
}

pub struct BillOutput {
    pub outcome: crate::simnet::PeriodOutcome,
}

/// Bills one period and writes `bills.csv`, `stats.csv` and `alerts.csv`.
/// A detected tamper still writes every report, then fails with
/// [`PipelineError::Aborted`].
pub fn cmd_bill(cfg: &RunConfig) -> Result<BillOutput, PipelineError> {
    prepare(cfg, Command::Bill)?;
    let corpus = load_corpus(cfg)?;
    let n_clients = cfg.bill.n_clients.unwrap_or(corpus.len());
    if n_clients > corpus.len() {
        return Err(PipelineError::Config(format!("{n_clients} clients requested, corpus has {}", corpus.len())));
    }
    let clients = &corpus[..n_clients];
    let start = clients.first().map(|s| s.start).unwrap_or(crate::ingest::DEFAULT_START);
    if let Some(s) = clients.iter().find(|s| s.start != start) {
        return Err(PipelineError::Data(format!("meter {} starts at {}, expected {start}", s.meter_id, s.start)));
    }
    let days = match cfg.bill.days {
        Some(d) => d,
        None => clients.iter().map(MeterSeries::days).min().unwrap_or(1),
    };
    if days == 0 {
        return Err(PipelineError::Data("corpus holds less than one day of readings".into()));
    }
    let tariff = cfg.bill.tariff.clone().unwrap_or_else(|| default_tariff(cfg.mode));
    if tariff.mode() != cfg.mode {
        return Err(PipelineError::Config(format!(
            "tariff is {} but mode is {}",
            tariff.mode().as_str(),
            cfg.mode.as_str()
        )));
    }
    tariff.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let model = match &cfg.bill.model {
        Some(p) => Some(BiLstmModel::load(p).map_err(|e| PipelineError::Data(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut req = PeriodRequest::new(cfg.parties, tariff, BillingPeriod::days(start, days), clients);
    req.adversary = cfg.bill.adversary.clone();
    req.seed = cfg.seed;
    req.schedule = cfg.schedule;
    req.timing = cfg.timing;
    req.codec = cfg.codec();
    req.modulus = cfg.modulus;
    req.detector = model.as_ref();
    req.alert_threshold = cfg.bill.alert_threshold;
    let outcome = run_billing_period(&req)?;
    write(&cfg.out, "bills.csv", &bills_to_csv(&outcome.bills))?;
    write(&cfg.out, "stats.csv", &outcome.stats.to_csv())?;
    write(&cfg.out, "alerts.csv", &alerts_to_csv(&outcome.alerts))?;
    if outcome.aborted {
        let reason = outcome.alerts.first().map(|a| a.detail.clone()).unwrap_or_default();
        return Err(PipelineError::Aborted(reason));
    }
    Ok(BillOutput { outcome })
}

struct Split {
    train: Dataset,
    test: Dataset,
}

fn split_corpus(cfg: &RunConfig) -> Result<Split, PipelineError> {
    let corpus = load_corpus(cfg)?;
    let (tr, te) = split_meters(&corpus, cfg.detect.test_fraction, cfg.seed);
    let w = cfg.detect.detector.window_len;
    let pick = |ix: &[usize]| ix.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>();
    Ok(Split { train: Dataset::from_series(&pick(&tr), w), test: Dataset::from_series(&pick(&te), w) })
}

fn model_path(cfg: &RunConfig) -> PathBuf {
    cfg.detect.model.clone().unwrap_or_else(|| cfg.out.join("model.blsm"))
}

pub struct TrainOutput {
    pub model: BiLstmModel,
    pub report: crate::detector::TrainReport,
    pub metrics_csv: String,
}

/// Trains on the 70% meter split; writes `model.blsm`, `train_report.json`
/// and `metrics.csv` (train and test rows).
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput, PipelineError> {
    prepare(cfg, Command::Train)?;
    let split = split_corpus(cfg)?;
    let (model, report) = train(&split.train, &cfg.detect.detector)?;
    let path = model_path(cfg);
    model.save(&path).map_err(|e| PipelineError::Failure(format!("{}: {e}", path.display())))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write(&cfg.out, "train_report.json", &json)?;
    let t = cfg.detect.threshold;
    let metrics_csv =
        metrics_to_csv(&[("train", evaluate(&model, &split.train, t)?), ("test", evaluate(&model, &split.test, t)?)]);
    write(&cfg.out, "metrics.csv", &metrics_csv)?;
    Ok(TrainOutput { model, report, metrics_csv })
}

/// Evaluates a saved model on the same split; writes `metrics.csv`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<String, PipelineError> {
    prepare(cfg, Command::Eval)?;
    let path = model_path(cfg);
    let model = BiLstmModel::load(&path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    let split = split_corpus(cfg)?;
    let t = cfg.detect.threshold;
    let csv = metrics_to_csv(&[("train", evaluate(&model, &split.train, t)?), ("test", evaluate(&model, &split.test, t)?)]);
    write(&cfg.out, "metrics.csv", &csv)?;
    Ok(csv)
}

/// One long-form row of the overhead sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_clients: usize,
    pub n_intervals: usize,
    pub n_parties: usize,
    pub mode: TariffMode,
    pub metric: String,
    pub measured: u64,
    pub modeled: Option<u64>,
}

impl BenchRow {
    pub fn matches(&self) -> Option<bool> {
        self.modeled.map(|m| m == self.measured)
    }
}

pub const BENCH_HEADER: &str = "n_clients,n_intervals,n_parties,mode,metric,measured,modeled,match";

pub fn bench_to_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in rows {
        let modeled = r.modeled.map(|m| m.to_string()).unwrap_or_default();
        let ok = r.matches().map(|b| b.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{modeled},{ok}\n",
            r.n_clients,
            r.n_intervals,
            r.n_parties,
            r.mode.as_str(),
            r.metric,
            r.measured
        ));
    }
    out
}

/// Runs an honest period per sweep point and compares measured traffic with
/// [`predict_bytes`]. Writes `bench.csv`; fails if any modeled row disagrees.
pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<BenchRow>, PipelineError> {
    prepare(cfg, Command::Bench)?;
    let b = &cfg.bench;
    let mut rows = Vec::new();
    for &mode in &b.modes {
        for &n_parties in &b.n_parties {
            for &n_clients in &b.n_clients {
                for &n_intervals in &b.n_intervals {
                    rows.extend(bench_point(cfg, mode, n_parties, n_clients, n_intervals)?);
                }
            }
        }
    }
    write(&cfg.out, "bench.csv", &bench_to_csv(&rows))?;
    if let Some(r) = rows.iter().find(|r| r.matches() == Some(false)) {
        return Err(PipelineError::Failure(format!(
            "measured {} of {} differs from the model ({} vs {:?}) at C={} T={} n={} {}",
            r.metric,
            r.measured,
            r.measured,
            r.modeled,
            r.n_clients,
            r.n_intervals,
            r.n_parties,
            r.mode.as_str()
        )));
    }
    Ok(rows)
}

fn bench_point(
    cfg: &RunConfig,
    mode: TariffMode,
    n_parties: usize,
    n_clients: usize,
    n_intervals: usize,
) -> Result<Vec<BenchRow>, PipelineError> {
    if n_intervals == 0 {
        return Err(PipelineError::Config("sweep intervals must be positive".into()));
    }
    let days = n_intervals.div_ceil(INTERVALS_PER_DAY);
    let corpus = synthesize(n_clients, days, cfg.seed);
    let tariff = match mode {
        TariffMode::Static => Tariff::flat(0.15, 1),
        TariffMode::Dynamic => Tariff::Dynamic { base_prices: vec![0.15], k: 0.002, capacity: 100.0 },
    };
    let mut req = PeriodRequest::new(n_parties, tariff, BillingPeriod::new(crate::ingest::DEFAULT_START, n_intervals), &corpus);
    req.seed = cfg.seed;
    req.schedule = cfg.schedule;
    req.timing = cfg.timing;
    req.codec = cfg.codec();
    req.modulus = cfg.modulus;
    let outcome = run_billing_period(&req)?;
    let stats = &outcome.stats;
    let model = predict_bytes(n_clients, n_intervals, n_parties, mode);

    let row = |metric: &str, measured: u64, modeled: Option<u64>| BenchRow {
        n_clients,
        n_intervals,
        n_parties,
        mode,
        metric: metric.to_string(),
        measured,
        modeled,
    };
    let sum_phases = |e: Endpoint, f: fn(&crate::simnet::EndpointStats) -> u64| -> u64 {
        Phase::ALL.iter().map(|&p| f(&stats.get(e, p))).sum()
    };
    let model_sum = |e: Endpoint, f: fn((u64, u64, u64)) -> u64| -> u64 { Phase::ALL.iter().map(|&p| f(model.get(e, p))).sum() };

    let mut rows = vec![row("bytes_total", stats.total_sent(), Some(model.total_bytes()))];
    for p in Phase::ALL {
        let measured: u64 = stats.endpoints().iter().map(|&e| stats.get(e, p).bytes_sent).sum();
        let modeled: u64 = (0..n_parties)
            .map(Endpoint::party)
            .chain((0..n_clients).map(Endpoint::client))
            .chain([Endpoint::DEALER, Endpoint::SUPPLIER])
            .map(|e| model.get(e, p).0)
            .sum();
        rows.push(row(&format!("bytes_{}", p.as_str()), measured, Some(modeled)));
        rows.push(row(&format!("rounds_{}", p.as_str()), stats.phase_rounds(p), Some(model.phase_rounds(p))));
    }
    if n_clients > 0 {
        let c0 = Endpoint::client(0);
        rows.push(row("client_bytes_sent", sum_phases(c0, |s| s.bytes_sent), Some(model_sum(c0, |m| m.0))));
        rows.push(row("client_bytes_received", sum_phases(c0, |s| s.bytes_received), Some(model.client_download())));
    }
    let p0 = Endpoint::party(0);
    rows.push(row("party_bytes_sent", sum_phases(p0, |s| s.bytes_sent), Some(model_sum(p0, |m| m.0))));
    rows.push(row("party_bytes_received", sum_phases(p0, |s| s.bytes_received), Some(model_sum(p0, |m| m.1))));
    let triples = crate::billing::triples_required(n_clients, n_intervals, mode) as u64;
    rows.push(row("triples", triples, Some(triples)));
    // The per-endpoint comparison covers every endpoint and phase at once.
    rows.push(row("model_exact", model.matches(stats) as u64, Some(1)));
    if cfg.timing {
        rows.push(row("cpu_micros_parties", (0..n_parties).map(|i| sum_phases(Endpoint::party(i), |s| s.cpu_micros)).sum(), None));
        if n_clients > 0 {
            rows.push(row("cpu_micros_client", sum_phases(Endpoint::client(0), |s| s.cpu_micros), None));
        }
        rows.push(row("cpu_micros_dealer", sum_phases(Endpoint::DEALER, |s| s.cpu_micros), None));
    }
    Ok(rows)
}

/// Dispatches `command`, returning the process exit code.
pub fn run(command: Command, cfg: &RunConfig) -> Result<(), PipelineError> {
    match command {
        Command::GenData => cmd_gen_data(cfg).map(drop),
        Command::Bill => cmd_bill(cfg).map(drop),
        Command::Train => cmd_train(cfg).map(drop),
        Command::Eval => cmd_eval(cfg).map(drop),
        Command::Bench => cmd_bench(cfg).map(drop),
    }
}
