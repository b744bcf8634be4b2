//! Online phase: every endpoint simulated in one process, all cross-endpoint
//! traffic routed through a [`Transport`].

use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::dealer::{client_upload, BeaverTriple, DealerMaterial, TriplePool};
use super::{AuthShare, MacKeyShare, MpcError, PartyId, Shared};
use crate::field::Fp;
use crate::simnet::{Endpoint, Envelope, Phase, Transport};

const COMMIT_TAG: &[u8] = b"smartbill/mac-commit/v1";
const COEFF_TAG: &[u8] = b"smartbill/mac-coefficients/v1";

/// How party-local computation is scheduled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Sequential,
    /// One OS thread per computation party for each local step; results are
    /// joined in party order so transcripts match the sequential schedule.
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacCheck {
    Pass,
    Fail,
}

/// What an opening reveals, kept for transcript audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpenKind {
    BeaverMask,
    Aggregate,
    Output,
}

/// An opened value as seen by each party. Honest runs agree everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Opened<const P: u64> {
    pub views: Vec<Fp<P>>,
}

impl<const P: u64> Opened<P> {
    pub fn value(&self) -> Fp<P> {
        self.views[0]
    }

    pub fn is_consistent(&self) -> bool {
        self.views.iter().all(|v| *v == self.views[0])
    }
}

/// One party's record of an opening: its view of the value and its own MAC share.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct OpenRecord<const P: u64> {
    opened: Fp<P>,
    mac_share: Fp<P>,
}

struct ClientState<const P: u64> {
    /// Value pads per input slot, one per party.
    pads: Vec<Vec<Fp<P>>>,
    /// Global mask index of the first slot.
    first_slot: usize,
    next: usize,
}

struct PartyState<const P: u64> {
    key: MacKeyShare<P>,
    mac_pads: Vec<Fp<P>>,
    transcript: Vec<OpenRecord<P>>,
    nonce_rng: ChaCha20Rng,
}

/// All endpoints of one billing period, from dealer distribution to MAC check.
pub struct Session<'n, const P: u64> {
    n_parties: usize,
    net: &'n mut dyn Transport,
    schedule: Schedule,
    phase: Phase,
    parties: Vec<PartyState<P>>,
    clients: Vec<ClientState<P>>,
    triples: TriplePool<P>,
    open_log: Vec<OpenKind>,
}

fn decode<const P: u64>(word: u64, env: &Envelope) -> Result<Fp<P>, MpcError> {
    Fp::from_canonical(word).map_err(|e| MpcError::Malformed {
        from: env.from,
        to: env.to,
        reason: e.to_string(),
    })
}

fn expect_len(env: &Envelope, words: usize) -> Result<(), MpcError> {
    if env.words.len() != words {
        return Err(MpcError::Malformed {
            from: env.from,
            to: env.to,
            reason: format!("expected {words} words, got {}", env.words.len()),
        });
    }
    Ok(())
}

impl<'n, const P: u64> Session<'n, P> {
    /// Distributes dealer material over `net` (offline phase).
    ///
    /// `inputs_per_client[c]` input masks are routed to client `c`, in order;
    /// the remaining masks stay unused.
    pub fn offline(
        material: &DealerMaterial<P>,
        inputs_per_client: &[usize],
        net: &'n mut dyn Transport,
        schedule: Schedule,
        seed: u64,
    ) -> Result<Self, MpcError> {
        let n = material.n_parties;
        if n < 2 {
            return Err(MpcError::TooFewParties(n));
        }
        let needed: usize = inputs_per_client.iter().sum();
        if needed > material.masks.len() {
            return Err(MpcError::Material(format!(
                "{needed} input masks requested, {} dealt",
                material.masks.len()
            )));
        }

        let mut batch = Vec::with_capacity(n + inputs_per_client.len());
        for i in 0..n {
            let mut words = Vec::with_capacity(1 + material.masks.len() + 6 * material.triples.len());
            words.push(material.key_shares[i].alpha_share.value());
            words.extend(material.masks.iter().map(|m| m.mac_pads[i].value()));
            for t in &material.triples {
                for s in [&t.a, &t.b, &t.c] {
                    words.push(s.0[i].value_share.value());
                    words.push(s.0[i].mac_share.value());
                }
            }
            batch.push(Envelope::new(Endpoint::DEALER, Endpoint::party(i), words));
        }
        let mut slot = 0;
        for (c, &count) in inputs_per_client.iter().enumerate() {
            if count > 0 {
                let words = material.masks[slot..slot + count]
                    .iter()
                    .flat_map(|m| m.value_pads.iter().map(|p| p.value()))
                    .collect();
                batch.push(Envelope::new(Endpoint::DEALER, Endpoint::client(c), words));
            }
            slot += count;
        }
        let delivered = net.exchange(Phase::Offline, batch);

        let n_masks = material.masks.len();
        let n_triples = material.triples.len();
        let mut parties = Vec::with_capacity(n);
        let mut triple_shares: Vec<[Vec<AuthShare<P>>; 3]> =
            (0..n_triples).map(|_| [Vec::new(), Vec::new(), Vec::new()]).collect();
        for (i, env) in delivered[..n].iter().enumerate() {
            expect_len(env, 1 + n_masks + 6 * n_triples)?;
            let key = MacKeyShare { alpha_share: decode(env.words[0], env)? };
            let mac_pads = env.words[1..1 + n_masks]
                .iter()
                .map(|&w| decode(w, env))
                .collect::<Result<Vec<_>, _>>()?;
            for (t, chunk) in env.words[1 + n_masks..].chunks_exact(6).enumerate() {
                for (k, pair) in chunk.chunks_exact(2).enumerate() {
                    let share = AuthShare::new(PartyId(i), decode(pair[0], env)?, decode(pair[1], env)?);
                    triple_shares[t][k].push(share);
                }
            }
            let mut nonce_seed = [0u8; 32];
            nonce_seed[..8].copy_from_slice(&seed.to_le_bytes());
            nonce_seed[8..16].copy_from_slice(&(i as u64).to_le_bytes());
            parties.push(PartyState {
                key,
                mac_pads,
                transcript: Vec::new(),
                nonce_rng: ChaCha20Rng::from_seed(nonce_seed),
            });
        }
        let triples = triple_shares
            .into_iter()
            .map(|[a, b, c]| BeaverTriple { a: Shared(a), b: Shared(b), c: Shared(c) })
            .collect();

        let mut clients = Vec::with_capacity(inputs_per_client.len());
        let mut cursor = n;
        let mut slot = 0;
        for &count in inputs_per_client {
            let mut pads = Vec::with_capacity(count);
            if count > 0 {
                let env = &delivered[cursor];
                cursor += 1;
                expect_len(env, count * n)?;
                for chunk in env.words.chunks_exact(n) {
                    pads.push(chunk.iter().map(|&w| decode(w, env)).collect::<Result<Vec<_>, _>>()?);
                }
            }
            clients.push(ClientState { pads, first_slot: slot, next: 0 });
            slot += count;
        }

        Ok(Session {
            n_parties: n,
            net,
            schedule,
            phase: Phase::Online,
            parties,
            clients,
            triples: TriplePool::new(triples),
            open_log: Vec::new(),
        })
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    /// Key shares as received by each party.
    pub fn key_shares(&self) -> Vec<MacKeyShare<P>> {
        self.parties.iter().map(|p| p.key).collect()
    }

    pub fn triples(&self) -> &TriplePool<P> {
        &self.triples
    }

    pub fn open_log(&self) -> &[OpenKind] {
        &self.open_log
    }

    /// Openings awaiting the MAC check.
    pub fn pending_opens(&self) -> usize {
        self.parties[0].transcript.len()
    }

    pub fn transport(&mut self) -> &mut dyn Transport {
        &mut *self.net
    }

    /// Runs `f` once per party (see [`Schedule`]) and charges the elapsed time
    /// to that party.
    fn per_party<T, F>(&mut self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let (out, elapsed) = run_per_party(self.schedule, self.net.timing(), self.n_parties, f);
        for (i, e) in elapsed.into_iter().enumerate() {
            if let Some(e) = e {
                self.net.charge_cpu(Endpoint::party(i), self.phase, e);
            }
        }
        out
    }

    fn charge(&mut self, elapsed: Elapsed) {
        for (i, e) in elapsed.into_iter().enumerate() {
            if let Some(e) = e {
                self.net.charge_cpu(Endpoint::party(i), self.phase, e);
            }
        }
    }

    /// Time a party-local step done outside the session (e.g. linear algebra in billing).
    pub fn charge_local<T>(&mut self, f: impl FnOnce() -> T) -> T {
        if !self.net.timing() {
            return f();
        }
        let start = Instant::now();
        let out = f();
        let per_party = start.elapsed() / self.n_parties as u32;
        for i in 0..self.n_parties {
            self.net.charge_cpu(Endpoint::party(i), self.phase, per_party);
        }
        out
    }

    /// Secret-shares client inputs in a single round.
    ///
    /// Each client sends every party one message holding a `(value share, d)`
    /// word pair per input, 16 bytes per input per party.
    pub fn input_many(&mut self, inputs: &[(usize, Vec<Fp<P>>)]) -> Result<Vec<Vec<Shared<P>>>, MpcError> {
        let n = self.n_parties;
        let timing = self.net.timing();
        let mut batch = Vec::with_capacity(inputs.len() * n);
        for (client, values) in inputs {
            let state = self.clients.get_mut(*client).ok_or(MpcError::MaskExhausted(*client))?;
            if state.next + values.len() > state.pads.len() {
                return Err(MpcError::MaskExhausted(*client));
            }
            let start = timing.then(Instant::now);
            let mut per_party: Vec<Vec<u64>> = vec![Vec::with_capacity(2 * values.len()); n];
            for (k, x) in values.iter().enumerate() {
                let upload = client_upload(&state.pads[state.next + k], *x);
                for (i, (v, d)) in upload.into_iter().enumerate() {
                    per_party[i].push(v.value());
                    per_party[i].push(d.value());
                }
            }
            state.next += values.len();
            if let Some(s) = start {
                self.net.charge_cpu(Endpoint::client(*client), self.phase, s.elapsed());
            }
            for (i, words) in per_party.into_iter().enumerate() {
                batch.push(Envelope::new(Endpoint::client(*client), Endpoint::party(i), words));
            }
        }
        let delivered = self.net.exchange(self.phase, batch);

        // slot of the first consumed mask per input batch
        let firsts: Vec<usize> = inputs
            .iter()
            .map(|(c, v)| {
                let st = &self.clients[*c];
                st.first_slot + st.next - v.len()
            })
            .collect();
        let parties = &self.parties;
        let delivered = &delivered;
        let firsts = &firsts;
        let (per_party, elapsed) = run_per_party(self.schedule, timing, n, |i| {
            let party = &parties[i];
            inputs
                .iter()
                .enumerate()
                .map(|(k, (_, values))| {
                    let env = &delivered[k * n + i];
                    expect_len(env, 2 * values.len())?;
                    env.words
                        .chunks_exact(2)
                        .enumerate()
                        .map(|(j, pair)| {
                            let v = decode(pair[0], env)?;
                            let d = decode(pair[1], env)?;
                            let pad = party.mac_pads[firsts[k] + j];
                            Ok(AuthShare::new(PartyId(i), v, pad + d * party.key.alpha_share))
                        })
                        .collect::<Result<Vec<_>, MpcError>>()
                })
                .collect::<Result<Vec<_>, MpcError>>()
        });
        self.charge(elapsed);
        let per_party = per_party.into_iter().collect::<Result<Vec<_>, _>>()?;

        Ok(inputs
            .iter()
            .enumerate()
            .map(|(k, (_, values))| {
                (0..values.len()).map(|j| Shared(per_party.iter().map(|p| p[k][j]).collect())).collect()
            })
            .collect())
    }

    pub fn input(&mut self, client: usize, values: &[Fp<P>]) -> Result<Vec<Shared<P>>, MpcError> {
        Ok(self.input_many(&[(client, values.to_vec())])?.remove(0))
    }

    /// Opens a batch of shared values in one round: every party sends its value
    /// shares to every other party. MAC verification is deferred to
    /// [`Session::check_macs`].
    pub fn open_many(&mut self, values: &[Shared<P>], kind: OpenKind) -> Result<Vec<Opened<P>>, MpcError> {
        if values.is_empty() {
            return Ok(Vec::new());
        }
        let n = self.n_parties;
        for v in values {
            if v.n_parties() != n {
                return Err(MpcError::PartyCountMismatch(v.n_parties(), n));
            }
        }
        let mut batch = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            let words: Vec<u64> = values.iter().map(|v| v.0[i].value_share.value()).collect();
            for j in 0..n {
                if j != i {
                    batch.push(Envelope::new(Endpoint::party(i), Endpoint::party(j), words.clone()));
                }
            }
        }
        let delivered = self.net.exchange(self.phase, batch);

        let views: Vec<Result<Vec<Fp<P>>, MpcError>> = self.per_party(|j| {
            let mut acc: Vec<Fp<P>> = values.iter().map(|v| v.0[j].value_share).collect();
            for i in (0..n).filter(|&i| i != j) {
                // sender i's messages are laid out in receiver order, skipping i itself
                let env = &delivered[i * (n - 1) + if j < i { j } else { j - 1 }];
                expect_len(env, values.len())?;
                for (a, &w) in acc.iter_mut().zip(&env.words) {
                    *a += decode(w, env)?;
                }
            }
            Ok(acc)
        });
        let views = views.into_iter().collect::<Result<Vec<_>, _>>()?;

        for (j, party) in self.parties.iter_mut().enumerate() {
            party.transcript.extend(
                views[j]
                    .iter()
                    .zip(values)
                    .map(|(&opened, v)| OpenRecord { opened, mac_share: v.0[j].mac_share }),
            );
        }
        self.open_log.extend(std::iter::repeat_n(kind, values.len()));
        Ok((0..values.len()).map(|k| Opened { views: views.iter().map(|v| v[k]).collect() }).collect())
    }

    pub fn open(&mut self, value: &Shared<P>, kind: OpenKind) -> Result<Opened<P>, MpcError> {
        Ok(self.open_many(std::slice::from_ref(value), kind)?.remove(0))
    }

    /// Beaver multiplication of each pair, consuming the next unused triples.
    /// All `2 * pairs.len()` maskings are opened in one round.
    pub fn beaver_mul_many(&mut self, pairs: &[(&Shared<P>, &Shared<P>)]) -> Result<Vec<Shared<P>>, MpcError> {
        let ids = (0..pairs.len()).map(|_| self.triples.take_next()).collect::<Result<Vec<_>, _>>()?;
        self.beaver_with(pairs, &ids)
    }

    /// Beaver multiplication with an explicitly chosen triple.
    pub fn beaver_mul(&mut self, x: &Shared<P>, y: &Shared<P>, triple: usize) -> Result<Shared<P>, MpcError> {
        self.triples.take(triple)?;
        Ok(self.beaver_with(&[(x, y)], &[triple])?.remove(0))
    }

    fn beaver_with(&mut self, pairs: &[(&Shared<P>, &Shared<P>)], ids: &[usize]) -> Result<Vec<Shared<P>>, MpcError> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut masked = Vec::with_capacity(2 * pairs.len());
        for ((x, y), &t) in pairs.iter().zip(ids) {
            let triple = self.triples.get(t);
            masked.push(x.sub(&triple.a)?);
            masked.push(y.sub(&triple.b)?);
        }
        let opened = self.open_many(&masked, OpenKind::BeaverMask)?;
        drop(masked);

        let keys = self.key_shares();
        let triples = &self.triples;
        let (products, elapsed) = run_per_party(self.schedule, self.net.timing(), self.n_parties, |i| {
            ids.iter()
                .enumerate()
                .map(|(k, &t)| {
                    let BeaverTriple { a, b, c } = triples.get(t);
                    let eps = opened[2 * k].views[i];
                    let del = opened[2 * k + 1].views[i];
                    let (a, b, c) = (a.0[i], b.0[i], c.0[i]);
                    let ed = eps * del;
                    let mut value = c.value_share + eps * b.value_share + del * a.value_share;
                    if i == 0 {
                        value += ed;
                    }
                    let mac = c.mac_share + eps * b.mac_share + del * a.mac_share + ed * keys[i].alpha_share;
                    AuthShare::new(PartyId(i), value, mac)
                })
                .collect::<Vec<_>>()
        });
        self.charge(elapsed);
        Ok((0..ids.len()).map(|k| Shared(products.iter().map(|p| p[k]).collect())).collect())
    }

    /// Batched MAC check over every opening since the last check.
    ///
    /// Each party draws nonzero combination coefficients from a hash of its
    /// view of the opened values, computes
    /// `sigma_i = sum_j r_j * (mac_ij - alpha_i * x_j)`, commits to it with a
    /// hash and a fresh nonce, then reveals. The check passes only if every
    /// party sees valid openings of all commitments and `sum_i sigma_i = 0`.
    /// The transcript is cleared either way.
    pub fn check_macs(&mut self) -> Result<MacCheck, MpcError> {
        if self.parties.iter().all(|p| p.transcript.is_empty()) {
            return Err(MpcError::EmptyTranscript);
        }
        let n = self.n_parties;
        let saved_phase = self.phase;
        self.phase = Phase::MacCheck;

        let parties = &self.parties;
        let (sigmas, elapsed) = run_per_party(self.schedule, self.net.timing(), n, |i| {
            let party = &parties[i];
            let mut h = Sha256::new();
            h.update(COEFF_TAG);
            for rec in &party.transcript {
                h.update(rec.opened.to_le_bytes());
            }
            let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
            party
                .transcript
                .iter()
                .map(|rec| Fp::<P>::random_nonzero(&mut rng) * (rec.mac_share - party.key.alpha_share * rec.opened))
                .sum::<Fp<P>>()
        });
        self.charge(elapsed);
        let nonces: Vec<[u8; 32]> = self
            .parties
            .iter_mut()
            .map(|p| {
                let mut nonce = [0u8; 32];
                p.nonce_rng.fill_bytes(&mut nonce);
                nonce
            })
            .collect();
        for p in &mut self.parties {
            p.transcript.clear();
        }

        let commitments: Vec<[u64; 4]> =
            (0..n).map(|i| commitment_words(i, sigmas[i].value(), &nonces[i])).collect();
        let mut batch = Vec::with_capacity(n * (n - 1));
        for (i, c) in commitments.iter().enumerate() {
            for j in (0..n).filter(|&j| j != i) {
                batch.push(Envelope::new(Endpoint::party(i), Endpoint::party(j), c.to_vec()));
            }
        }
        let received_commits = self.net.exchange(Phase::MacCheck, batch);

        let mut batch = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            let mut words = vec![sigmas[i].value()];
            words.extend(nonces[i].chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())));
            for j in (0..n).filter(|&j| j != i) {
                batch.push(Envelope::new(Endpoint::party(i), Endpoint::party(j), words.clone()));
            }
        }
        let received_reveals = self.net.exchange(Phase::MacCheck, batch);

        let verdicts: Vec<bool> = self.per_party(|j| {
            let mut total = sigmas[j];
            for i in (0..n).filter(|&i| i != j) {
                let idx = i * (n - 1) + if j < i { j } else { j - 1 };
                let commit = &received_commits[idx].words;
                let reveal = &received_reveals[idx].words;
                if commit.len() != 4 || reveal.len() != 5 {
                    return false;
                }
                let mut nonce = [0u8; 32];
                for (k, w) in reveal[1..].iter().enumerate() {
                    nonce[8 * k..8 * k + 8].copy_from_slice(&w.to_le_bytes());
                }
                if commitment_words(i, reveal[0], &nonce)[..] != commit[..] {
                    return false;
                }
                match Fp::<P>::from_canonical(reveal[0]) {
                    Ok(s) => total += s,
                    Err(_) => return false,
                }
            }
            total.is_zero()
        });
        self.phase = saved_phase;
        Ok(if verdicts.iter().all(|&ok| ok) { MacCheck::Pass } else { MacCheck::Fail })
    }

    /// Sends opened outputs to their recipients, one copy from every party.
    /// A recipient accepts a value only if all copies agree.
    pub fn deliver(&mut self, outputs: &[(&Opened<P>, &[Endpoint])]) -> Result<Vec<Fp<P>>, MpcError> {
        use std::collections::BTreeMap;
        let n = self.n_parties;
        let mut routes: BTreeMap<Endpoint, Vec<usize>> = BTreeMap::new();
        for (k, (_, recipients)) in outputs.iter().enumerate() {
            for r in recipients.iter() {
                routes.entry(*r).or_default().push(k);
            }
        }
        let mut batch = Vec::with_capacity(n * routes.len());
        for i in 0..n {
            for (to, ks) in &routes {
                let words = ks.iter().map(|&k| outputs[k].0.views[i].value()).collect();
                batch.push(Envelope::new(Endpoint::party(i), *to, words));
            }
        }
        let delivered = self.net.exchange(self.phase, batch);

        let mut agreed: Vec<Option<Fp<P>>> = vec![None; outputs.len()];
        for (r_idx, (to, ks)) in routes.iter().enumerate() {
            let mut first: Option<Vec<u64>> = None;
            for i in 0..n {
                let env = &delivered[i * routes.len() + r_idx];
                match &first {
                    None => first = Some(env.words.clone()),
                    Some(w) if *w != env.words => return Err(MpcError::OutputMismatch(*to)),
                    Some(_) => {}
                }
            }
            let words = first.unwrap_or_default();
            expect_len(&delivered[r_idx], ks.len())?;
            for (&k, &w) in ks.iter().zip(&words) {
                let v = decode(w, &delivered[r_idx])?;
                match agreed[k] {
                    Some(prev) if prev != v => return Err(MpcError::OutputMismatch(*to)),
                    _ => agreed[k] = Some(v),
                }
            }
        }
        Ok(agreed.into_iter().map(|v| v.unwrap_or(Fp::ZERO)).collect())
    }
}

type Elapsed = Vec<Option<Duration>>;

fn run_per_party<T, F>(schedule: Schedule, timing: bool, n: usize, f: F) -> (Vec<T>, Elapsed)
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let timed = |i: usize| {
        let start = timing.then(Instant::now);
        let out = f(i);
        (out, start.map(|s| s.elapsed()))
    };
    match schedule {
        Schedule::Sequential => (0..n).map(timed).unzip(),
        Schedule::Threaded => std::thread::scope(|scope| {
            let timed = &timed;
            let handles: Vec<_> = (0..n).map(|i| scope.spawn(move || timed(i))).collect();
            handles.into_iter().map(|h| h.join().expect("party thread panicked")).unzip()
        }),
    }
}

fn commitment_words(party: usize, sigma_word: u64, nonce: &[u8; 32]) -> [u64; 4] {
    let mut h = Sha256::new();
    h.update(COMMIT_TAG);
    h.update((party as u64).to_le_bytes());
    h.update(sigma_word.to_le_bytes());
    h.update(nonce);
    let digest = h.finalize();
    let mut out = [0u64; 4];
    for (k, chunk) in digest.chunks_exact(8).enumerate() {
        out[k] = u64::from_le_bytes(chunk.try_into().unwrap());
    }
    out
}
