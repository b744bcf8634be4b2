//! Closed-form traffic model of one billing period.
//!
//! With `C` clients, `T` intervals, `n` parties, `M = C*T` multiplications
//! for dynamic tariffs (zero for static) and 8-byte words:
//!
//! | phase | message | bytes |
//! |---|---|---|
//! | offline | dealer to each party | `8 (1 + C T + 6 M)` |
//! | offline | dealer to each client | `8 T n` |
//! | online | each client to each party | `16 T` |
//! | online | party to party, Beaver openings (dynamic) | `16 M` |
//! | online | party to party, bill openings | `8 C` |
//! | online | each party to each client | `8` |
//! | online | each party to the supplier | `8 C` |
//! | mac-check | party to party commitment, then reveal | `32`, `40` |
//!
//! Without clients only the dealer's key-share messages are sent.

use std::collections::{BTreeMap, BTreeSet};

use super::{Endpoint, NetStats, Phase};
use crate::billing::TariffMode;

const WORD: u64 = 8;
const COMMIT_WORDS: u64 = 4;
const REVEAL_WORDS: u64 = 5;

/// Expected `(bytes_sent, bytes_received, rounds)` per endpoint and phase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrafficModel {
    pub n_clients: usize,
    pub n_intervals: usize,
    pub n_parties: usize,
    pub mode: Option<TariffMode>,
    entries: BTreeMap<(Endpoint, Phase), (u64, u64, u64)>,
    rounds: BTreeMap<Phase, u64>,
}

impl TrafficModel {
    fn send(&mut self, phase: Phase, from: Endpoint, to: Endpoint, bytes: u64) {
        self.entries.entry((from, phase)).or_default().0 += bytes;
        self.entries.entry((to, phase)).or_default().1 += bytes;
    }

    fn round(&mut self, phase: Phase, active: impl IntoIterator<Item = Endpoint>) {
        *self.rounds.entry(phase).or_default() += 1;
        for e in active {
            self.entries.entry((e, phase)).or_default().2 += 1;
        }
    }

    pub fn get(&self, endpoint: Endpoint, phase: Phase) -> (u64, u64, u64) {
        self.entries.get(&(endpoint, phase)).copied().unwrap_or_default()
    }

    pub fn phase_rounds(&self, phase: Phase) -> u64 {
        self.rounds.get(&phase).copied().unwrap_or(0)
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.values().map(|e| e.0).sum()
    }

    /// Bytes one client uploads to the parties: `16 T n`.
    pub fn client_upload(&self) -> u64 {
        2 * WORD * (self.n_intervals * self.n_parties) as u64
    }

    /// Bytes one client receives: `8 T n` of input pads and `8 n` of bill.
    pub fn client_download(&self) -> u64 {
        WORD * (self.n_intervals * self.n_parties + self.n_parties) as u64
    }

    /// Compares bytes and rounds of every endpoint and phase with `stats`.
    /// CPU time is not modelled.
    pub fn check(&self, stats: &NetStats) -> Result<(), String> {
        let mut keys: BTreeSet<(Endpoint, Phase)> = self.entries.keys().copied().collect();
        for e in stats.endpoints() {
            for p in Phase::ALL {
                let s = stats.get(e, p);
                if s.bytes_sent + s.bytes_received + s.rounds > 0 {
                    keys.insert((e, p));
                }
            }
        }
        for (e, p) in keys {
            let s = stats.get(e, p);
            let measured = (s.bytes_sent, s.bytes_received, s.rounds);
            let expected = self.get(e, p);
            if measured != expected {
                return Err(format!(
                    "{e} {}: measured (sent, received, rounds) {measured:?}, model {expected:?}",
                    p.as_str()
                ));
            }
        }
        for p in Phase::ALL {
            if stats.phase_rounds(p) != self.phase_rounds(p) {
                return Err(format!(
                    "{} rounds: measured {}, model {}",
                    p.as_str(),
                    stats.phase_rounds(p),
                    self.phase_rounds(p)
                ));
            }
        }
        Ok(())
    }

    pub fn matches(&self, stats: &NetStats) -> bool {
        self.check(stats).is_ok()
    }
}

/// Predicted traffic of an honest billing period.
pub fn predict_bytes(n_clients: usize, n_intervals: usize, n_parties: usize, mode: TariffMode) -> TrafficModel {
    let (c, t, n) = (n_clients as u64, n_intervals as u64, n_parties);
    let m = match mode {
        TariffMode::Static => 0,
        TariffMode::Dynamic => c * t,
    };
    let mut model = TrafficModel {
        n_clients,
        n_intervals,
        n_parties,
        mode: Some(mode),
        ..Default::default()
    };
    let parties = || (0..n).map(Endpoint::party);
    let clients = || (0..n_clients).map(Endpoint::client);
    let all_pairs = || parties().flat_map(move |a| parties().filter(move |b| *b != a).map(move |b| (a, b)));

    // offline
    for p in parties() {
        model.send(Phase::Offline, Endpoint::DEALER, p, WORD * (1 + c * t + 6 * m));
    }
    let client_pads = t > 0 && c > 0;
    if client_pads {
        for cl in clients() {
            model.send(Phase::Offline, Endpoint::DEALER, cl, WORD * t * n as u64);
        }
    }
    let offline_active: Vec<Endpoint> = std::iter::once(Endpoint::DEALER)
        .chain(parties())
        .chain(clients().filter(|_| client_pads))
        .collect();
    model.round(Phase::Offline, offline_active);
    if c == 0 {
        return model;
    }

    // online: input sharing
    for cl in clients() {
        for p in parties() {
            model.send(Phase::Online, cl, p, 2 * WORD * t);
        }
    }
    model.round(Phase::Online, clients().chain(parties()));
    if m > 0 {
        for (a, b) in all_pairs() {
            model.send(Phase::Online, a, b, 2 * WORD * m);
        }
        model.round(Phase::Online, parties());
    }
    for (a, b) in all_pairs() {
        model.send(Phase::Online, a, b, WORD * c);
    }
    model.round(Phase::Online, parties());

    // mac check
    for words in [COMMIT_WORDS, REVEAL_WORDS] {
        for (a, b) in all_pairs() {
            model.send(Phase::MacCheck, a, b, WORD * words);
        }
        model.round(Phase::MacCheck, parties());
    }

    // delivery
    for p in parties() {
        for cl in clients() {
            model.send(Phase::Online, p, cl, WORD);
        }
        model.send(Phase::Online, p, Endpoint::SUPPLIER, WORD * c);
    }
    model.round(Phase::Online, parties().chain(clients()).chain([Endpoint::SUPPLIER]));
    model
}
