//! Trusted-dealer preprocessing: MAC key shares, input masks and Beaver triples.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{AuthShare, MacKeyShare, MpcError, PartyId, Shared};
use crate::field::Fp;

const MAGIC: &[u8; 4] = b"SPDZ";
const VERSION: u16 = 1;

/// Correlated randomness for one client input.
///
/// `value_pads` go to the inputting client and sum to a random `r`; party `i`
/// receives only `mac_pads[i]`, and the MAC pads sum to `alpha * r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputMask<const P: u64> {
    pub value_pads: Vec<Fp<P>>,
    pub mac_pads: Vec<Fp<P>>,
}

impl<const P: u64> InputMask<P> {
    /// Client side: per party, the value share and the public offset `d = x - r`.
    pub fn client_upload(&self, x: Fp<P>) -> Vec<(Fp<P>, Fp<P>)> {
        client_upload(&self.value_pads, x)
    }

    /// Party side: turns a received `(value share, d)` pair into an authenticated share.
    pub fn party_share(
        owner: PartyId,
        value_share: Fp<P>,
        offset: Fp<P>,
        mac_pad: Fp<P>,
        key: MacKeyShare<P>,
    ) -> AuthShare<P> {
        AuthShare::new(owner, value_share, mac_pad + offset * key.alpha_share)
    }
}

pub(crate) fn client_upload<const P: u64>(pads: &[Fp<P>], x: Fp<P>) -> Vec<(Fp<P>, Fp<P>)> {
    let r: Fp<P> = pads.iter().copied().sum();
    let d = x - r;
    pads.iter()
        .enumerate()
        .map(|(i, &pad)| (if i == 0 { pad + d } else { pad }, d))
        .collect()
}

/// Authenticated shares of `a`, `b` and `c = a * b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeaverTriple<const P: u64> {
    pub a: Shared<P>,
    pub b: Shared<P>,
    pub c: Shared<P>,
}

/// Everything the dealer hands out for one billing period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DealerMaterial<const P: u64> {
    pub n_parties: usize,
    pub key_shares: Vec<MacKeyShare<P>>,
    pub masks: Vec<InputMask<P>>,
    pub triples: Vec<BeaverTriple<P>>,
}

fn additive<const P: u64>(secret: Fp<P>, n: usize, rng: &mut ChaCha20Rng) -> Vec<Fp<P>> {
    let mut parts: Vec<Fp<P>> = (0..n - 1).map(|_| Fp::random(rng)).collect();
    let partial: Fp<P> = parts.iter().copied().sum();
    parts.push(secret - partial);
    parts
}

fn authenticated<const P: u64>(x: Fp<P>, alpha: Fp<P>, n: usize, rng: &mut ChaCha20Rng) -> Shared<P> {
    let values = additive(x, n, rng);
    let macs = additive(alpha * x, n, rng);
    Shared(
        values
            .into_iter()
            .zip(macs)
            .enumerate()
            .map(|(i, (v, m))| AuthShare::new(PartyId(i), v, m))
            .collect(),
    )
}

/// Deals key shares, `secrets_count` input masks and `triples_count` triples.
///
/// The key `alpha` is drawn nonzero; a zero key would make every MAC vacuous.
/// Output is a pure function of the arguments.
pub fn offline_deal<const P: u64>(
    secrets_count: usize,
    triples_count: usize,
    n_parties: usize,
    seed: u64,
) -> DealerMaterial<P> {
    assert!(n_parties >= 2, "SPDZ needs at least two parties");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let alpha = Fp::<P>::random_nonzero(&mut rng);
    let key_shares = additive(alpha, n_parties, &mut rng)
        .into_iter()
        .map(|alpha_share| MacKeyShare { alpha_share })
        .collect();
    let masks = (0..secrets_count)
        .map(|_| {
            let r = Fp::random(&mut rng);
            InputMask {
                value_pads: additive(r, n_parties, &mut rng),
                mac_pads: additive(alpha * r, n_parties, &mut rng),
            }
        })
        .collect();
    let triples = (0..triples_count)
        .map(|_| {
            let a = Fp::random(&mut rng);
            let b = Fp::random(&mut rng);
            BeaverTriple {
                a: authenticated(a, alpha, n_parties, &mut rng),
                b: authenticated(b, alpha, n_parties, &mut rng),
                c: authenticated(a * b, alpha, n_parties, &mut rng),
            }
        })
        .collect();
    DealerMaterial { n_parties, key_shares, masks, triples }
}

impl<const P: u64> DealerMaterial<P> {
    /// Writes the versioned binary material file.
    ///
    /// Layout (little-endian): `"SPDZ"`, version `u16`, n_parties `u16`,
    /// modulus `u64`, mask count `u64`, triple count `u64`; then the key shares;
    /// then per mask and party the 16-byte pair (value pad, MAC pad); then per
    /// triple and party the AuthShares of `a`, `b`, `c`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), MpcError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n_parties as u16).to_le_bytes())?;
        w.write_all(&P.to_le_bytes())?;
        w.write_all(&(self.masks.len() as u64).to_le_bytes())?;
        w.write_all(&(self.triples.len() as u64).to_le_bytes())?;
        for k in &self.key_shares {
            w.write_all(&k.alpha_share.to_le_bytes())?;
        }
        for m in &self.masks {
            for i in 0..self.n_parties {
                w.write_all(&m.value_pads[i].to_le_bytes())?;
                w.write_all(&m.mac_pads[i].to_le_bytes())?;
            }
        }
        for t in &self.triples {
            for i in 0..self.n_parties {
                for s in [&t.a, &t.b, &t.c] {
                    w.write_all(&s.0[i].to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, MpcError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MpcError::Material("bad magic".into()));
        }
        let version = read_u16(&mut r)?;
        if version != VERSION {
            return Err(MpcError::Material(format!("unsupported version {version}")));
        }
        let n_parties = read_u16(&mut r)? as usize;
        if n_parties < 2 {
            return Err(MpcError::TooFewParties(n_parties));
        }
        let modulus = read_u64(&mut r)?;
        if modulus != P {
            return Err(MpcError::Material(format!("modulus {modulus} does not match {P}")));
        }
        let n_masks = read_u64(&mut r)? as usize;
        let n_triples = read_u64(&mut r)? as usize;
        let key_shares = (0..n_parties)
            .map(|_| Ok(MacKeyShare { alpha_share: read_fp(&mut r)? }))
            .collect::<Result<Vec<_>, MpcError>>()?;
        let mut masks = Vec::with_capacity(n_masks.min(1 << 20));
        for _ in 0..n_masks {
            let mut value_pads = Vec::with_capacity(n_parties);
            let mut mac_pads = Vec::with_capacity(n_parties);
            for _ in 0..n_parties {
                value_pads.push(read_fp(&mut r)?);
                mac_pads.push(read_fp(&mut r)?);
            }
            masks.push(InputMask { value_pads, mac_pads });
        }
        let mut triples = Vec::with_capacity(n_triples.min(1 << 20));
        for _ in 0..n_triples {
            let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
            for i in 0..n_parties {
                for dst in [&mut a, &mut b, &mut c] {
                    let mut buf = [0u8; 16];
                    r.read_exact(&mut buf)?;
                    dst.push(AuthShare::from_le_bytes(PartyId(i), buf)?);
                }
            }
            triples.push(BeaverTriple { a: Shared(a), b: Shared(b), c: Shared(c) });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(MpcError::Material("trailing bytes after declared content".into()));
        }
        Ok(DealerMaterial { n_parties, key_shares, masks, triples })
    }
}

fn read_u16(r: &mut impl Read) -> Result<u16, MpcError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, MpcError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_fp<const P: u64>(r: &mut impl Read) -> Result<Fp<P>, MpcError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(Fp::from_le_bytes(b)?)
}

/// Triples with single-use bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct TriplePool<const P: u64> {
    triples: Vec<BeaverTriple<P>>,
    consumed: Vec<bool>,
    cursor: usize,
}

impl<const P: u64> TriplePool<P> {
    pub fn new(triples: Vec<BeaverTriple<P>>) -> Self {
        let consumed = vec![false; triples.len()];
        TriplePool { triples, consumed, cursor: 0 }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.consumed.iter().filter(|c| !**c).count()
    }

    pub fn is_consumed(&self, index: usize) -> bool {
        self.consumed.get(index).copied().unwrap_or(false)
    }

    /// Marks triple `index` consumed and returns it.
    pub fn take(&mut self, index: usize) -> Result<&BeaverTriple<P>, MpcError> {
        match self.consumed.get(index) {
            None => Err(MpcError::TriplesExhausted),
            Some(true) => Err(MpcError::TripleReuse(index)),
            Some(false) => {
                self.consumed[index] = true;
                Ok(&self.triples[index])
            }
        }
    }

    /// Index of the next unused triple, marking it consumed.
    pub fn take_next(&mut self) -> Result<usize, MpcError> {
        while self.cursor < self.consumed.len() && self.consumed[self.cursor] {
            self.cursor += 1;
        }
        if self.cursor == self.consumed.len() {
            return Err(MpcError::TriplesExhausted);
        }
        self.consumed[self.cursor] = true;
        Ok(self.cursor)
    }

    pub fn get(&self, index: usize) -> &BeaverTriple<P> {
        &self.triples[index]
    }
}
