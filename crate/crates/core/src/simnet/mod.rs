//! Deterministic in-process network with exact byte accounting.
//!
//! Every protocol message is a vector of 8-byte little-endian words. A round is
//! one synchronous [`Transport::exchange`]; the network counts bytes and rounds
//! per endpoint and phase, keeps a transcript digest and applies adversarial
//! tampering from an [`AdversaryScript`].

mod adversary;
mod cost;
mod run;

pub use adversary::{AdversaryAction, AdversaryScript, TamperShare};
pub use cost::{predict_bytes, TrafficModel};
pub use run::{alerts_to_csv, run_billing_period, Alert, AlertKind, PeriodOutcome, PeriodRequest};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Mpc(#[from] crate::mpc::MpcError),
    #[error(transparent)]
    Billing(#[from] crate::billing::BillingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Dealer,
    ComputeParty,
    Client,
    Supplier,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Dealer => "dealer",
            Role::ComputeParty => "compute_party",
            Role::Client => "client",
            Role::Supplier => "supplier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub role: Role,
    pub id: usize,
}

impl Endpoint {
    pub const DEALER: Endpoint = Endpoint { role: Role::Dealer, id: 0 };
    pub const SUPPLIER: Endpoint = Endpoint { role: Role::Supplier, id: 0 };

    pub fn party(id: usize) -> Self {
        Endpoint { role: Role::ComputeParty, id }
    }

    pub fn client(id: usize) -> Self {
        Endpoint { role: Role::Client, id }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.role {
            Role::Dealer => "dealer",
            Role::ComputeParty => "party",
            Role::Client => "client",
            Role::Supplier => "supplier",
        };
        write!(f, "{prefix}-{}", self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Offline,
    Online,
    MacCheck,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Offline, Phase::Online, Phase::MacCheck];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Offline => "offline",
            Phase::Online => "online",
            Phase::MacCheck => "mac-check",
        }
    }
}

/// One point-to-point message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub from: Endpoint,
    pub to: Endpoint,
    pub words: Vec<u64>,
}

impl Envelope {
    pub fn new(from: Endpoint, to: Endpoint, words: Vec<u64>) -> Self {
        Envelope { from, to, words }
    }

    pub fn wire_len(&self) -> u64 {
        8 * self.words.len() as u64
    }
}

/// Synchronous message delivery.
pub trait Transport {
    /// Delivers one round. The returned envelopes are in the order given, with
    /// any adversarial modification applied.
    fn exchange(&mut self, phase: Phase, batch: Vec<Envelope>) -> Vec<Envelope>;

    /// Whether callers should measure compute time.
    fn timing(&self) -> bool {
        false
    }

    fn charge_cpu(&mut self, _endpoint: Endpoint, _phase: Phase, _elapsed: Duration) {}
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub rounds: u64,
    pub cpu_micros: u64,
}

impl std::ops::AddAssign for EndpointStats {
    fn add_assign(&mut self, o: Self) {
        self.bytes_sent += o.bytes_sent;
        self.bytes_received += o.bytes_received;
        self.rounds += o.rounds;
        self.cpu_micros += o.cpu_micros;
    }
}

/// Per-endpoint, per-phase accounting for one billing period.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NetStats {
    entries: BTreeMap<(Endpoint, Phase), EndpointStats>,
    rounds: BTreeMap<Phase, u64>,
}

impl NetStats {
    pub fn get(&self, endpoint: Endpoint, phase: Phase) -> EndpointStats {
        self.entries.get(&(endpoint, phase)).copied().unwrap_or_default()
    }

    pub fn endpoint_total(&self, endpoint: Endpoint) -> EndpointStats {
        let mut acc = EndpointStats::default();
        for phase in Phase::ALL {
            acc += self.get(endpoint, phase);
        }
        acc
    }

    pub fn endpoints(&self) -> BTreeSet<Endpoint> {
        self.entries.keys().map(|(e, _)| *e).collect()
    }

    /// Global rounds run in `phase`.
    pub fn phase_rounds(&self, phase: Phase) -> u64 {
        self.rounds.get(&phase).copied().unwrap_or(0)
    }

    pub fn total_rounds(&self) -> u64 {
        self.rounds.values().sum()
    }

    pub fn total_sent(&self) -> u64 {
        self.entries.values().map(|s| s.bytes_sent).sum()
    }

    pub fn total_received(&self) -> u64 {
        self.entries.values().map(|s| s.bytes_received).sum()
    }

    pub fn total_cpu_micros(&self) -> u64 {
        self.entries.values().map(|s| s.cpu_micros).sum()
    }

    fn entry(&mut self, endpoint: Endpoint, phase: Phase) -> &mut EndpointStats {
        self.entries.entry((endpoint, phase)).or_default()
    }

    /// CSV report `endpoint,role,phase,bytes_sent,bytes_received,rounds,cpu_micros`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("endpoint,role,phase,bytes_sent,bytes_received,rounds,cpu_micros\n");
        for ((endpoint, phase), s) in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                endpoint,
                endpoint.role.as_str(),
                phase.as_str(),
                s.bytes_sent,
                s.bytes_received,
                s.rounds,
                s.cpu_micros
            ));
        }
        out
    }
}

/// Header of a delivered message; payloads are folded into the digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageHeader {
    pub round: u64,
    pub phase: Phase,
    pub from: Endpoint,
    pub to: Endpoint,
    pub words: usize,
    /// Position among all messages received by `to`.
    pub index_at_receiver: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TamperEvent {
    pub header: MessageHeader,
    pub word: usize,
    pub delta: u64,
}

/// The in-process network.
#[derive(Debug, Clone)]
pub struct SimNet {
    stats: NetStats,
    headers: Vec<MessageHeader>,
    digest: Sha256,
    received: BTreeMap<Endpoint, usize>,
    round: u64,
    tampers: BTreeMap<(Endpoint, usize), TamperShare>,
    fired: Vec<TamperEvent>,
    timing: bool,
}

impl Default for SimNet {
    fn default() -> Self {
        Self::new()
    }
}

impl SimNet {
    pub fn new() -> Self {
        SimNet {
            stats: NetStats::default(),
            headers: Vec::new(),
            digest: Sha256::new(),
            received: BTreeMap::new(),
            round: 0,
            tampers: BTreeMap::new(),
            fired: Vec::new(),
            timing: false,
        }
    }

    pub fn with_timing(mut self, timing: bool) -> Self {
        self.timing = timing;
        self
    }

    /// Installs tamper actions; at most one per (receiver, message index).
    pub fn with_tampering(mut self, actions: &[TamperShare]) -> Result<Self, SimError> {
        for t in actions {
            if t.delta == 0 {
                return Err(SimError::Config("tamper delta must be nonzero".into()));
            }
            if self.tampers.insert((t.target, t.message_index), *t).is_some() {
                return Err(SimError::Config(format!(
                    "two tamper actions on message {} of {}",
                    t.message_index, t.target
                )));
            }
        }
        Ok(self)
    }

    pub fn stats(&self) -> &NetStats {
        &self.stats
    }

    pub fn headers(&self) -> &[MessageHeader] {
        &self.headers
    }

    pub fn fired_tampers(&self) -> &[TamperEvent] {
        &self.fired
    }

    /// Tamper actions whose target message was never delivered.
    pub fn unfired_tampers(&self) -> Vec<TamperShare> {
        self.tampers
            .values()
            .filter(|t| !self.fired.iter().any(|f| f.header.to == t.target && f.header.index_at_receiver == t.message_index))
            .cloned()
            .collect()
    }

    /// Hex SHA-256 over every delivered message (round, endpoints, payload).
    pub fn transcript_digest(&self) -> String {
        hex(&self.digest.clone().finalize())
    }

    pub fn into_stats(self) -> NetStats {
        self.stats
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn endpoint_bytes(e: Endpoint) -> [u8; 9] {
    let mut out = [0u8; 9];
    out[0] = e.role as u8;
    out[1..].copy_from_slice(&(e.id as u64).to_le_bytes());
    out
}

impl Transport for SimNet {
    fn exchange(&mut self, phase: Phase, mut batch: Vec<Envelope>) -> Vec<Envelope> {
        if batch.is_empty() {
            return batch;
        }
        self.round += 1;
        *self.stats.rounds.entry(phase).or_default() += 1;
        let mut active = BTreeSet::new();
        for env in batch.iter_mut() {
            let index = {
                let counter = self.received.entry(env.to).or_default();
                let i = *counter;
                *counter += 1;
                i
            };
            let header = MessageHeader {
                round: self.round,
                phase,
                from: env.from,
                to: env.to,
                words: env.words.len(),
                index_at_receiver: index,
            };
            if let Some(t) = self.tampers.get(&(env.to, index)) {
                if !env.words.is_empty() {
                    let word = t.word % env.words.len();
                    env.words[word] = env.words[word].wrapping_add(t.delta);
                    self.fired.push(TamperEvent { header, word, delta: t.delta });
                }
            }
            let bytes = env.wire_len();
            self.stats.entry(env.from, phase).bytes_sent += bytes;
            self.stats.entry(env.to, phase).bytes_received += bytes;
            active.insert(env.from);
            active.insert(env.to);

            self.digest.update(self.round.to_le_bytes());
            self.digest.update(endpoint_bytes(env.from));
            self.digest.update(endpoint_bytes(env.to));
            self.digest.update((env.words.len() as u64).to_le_bytes());
            for w in &env.words {
                self.digest.update(w.to_le_bytes());
            }
            self.headers.push(header);
        }
        for e in active {
            self.stats.entry(e, phase).rounds += 1;
        }
        batch
    }

    fn timing(&self) -> bool {
        self.timing
    }

    fn charge_cpu(&mut self, endpoint: Endpoint, phase: Phase, elapsed: Duration) {
        self.stats.entry(endpoint, phase).cpu_micros += elapsed.as_micros() as u64;
    }
}
