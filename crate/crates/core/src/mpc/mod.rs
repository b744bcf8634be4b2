//! SPDZ-style authenticated additive secret sharing.
//!
//! Every secret `x` is held as one [`AuthShare`] per computation party: value
//! shares sum to `x` and MAC shares sum to `alpha * x` for a global key `alpha`
//! that no single party knows. Linear operations are local; multiplication
//! consumes a Beaver triple and two openings; all openings are checked in one
//! batched MAC check.

mod dealer;
mod session;

pub use dealer::{offline_deal, BeaverTriple, DealerMaterial, InputMask, TriplePool};
pub use session::{MacCheck, OpenKind, Opened, Schedule, Session};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, Fp};
use crate::simnet::Endpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartyId(pub usize);

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("shares belong to different parties ({0:?} vs {1:?})")]
    OwnerMismatch(PartyId, PartyId),
    #[error("shared values have {0} and {1} party shares")]
    PartyCountMismatch(usize, usize),
    #[error("at least two computation parties are required, got {0}")]
    TooFewParties(usize),
    #[error("client {0} has no unused input mask left")]
    MaskExhausted(usize),
    #[error("beaver triple {0} was already consumed")]
    TripleReuse(usize),
    #[error("no unused beaver triple left")]
    TriplesExhausted,
    #[error("MAC check requested with an empty opening transcript")]
    EmptyTranscript,
    #[error("offline material has not been distributed")]
    NoMaterial,
    #[error("malformed message from {from} to {to}: {reason}")]
    Malformed { from: Endpoint, to: Endpoint, reason: String },
    #[error("computation parties delivered inconsistent outputs to {0}")]
    OutputMismatch(Endpoint),
    #[error("dealer material: {0}")]
    Material(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One party's share of the global MAC key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacKeyShare<const P: u64> {
    pub alpha_share: Fp<P>,
}

/// One party's view of an authenticated secret.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthShare<const P: u64> {
    pub value_share: Fp<P>,
    pub mac_share: Fp<P>,
    pub owner: PartyId,
}

impl<const P: u64> AuthShare<P> {
    /// Wire size: value then MAC, both little-endian.
    pub const BYTES: usize = 16;

    pub fn new(owner: PartyId, value_share: Fp<P>, mac_share: Fp<P>) -> Self {
        AuthShare { value_share, mac_share, owner }
    }

    pub fn add(&self, other: &Self) -> Result<Self, MpcError> {
        if self.owner != other.owner {
            return Err(MpcError::OwnerMismatch(self.owner, other.owner));
        }
        Ok(AuthShare::new(
            self.owner,
            self.value_share + other.value_share,
            self.mac_share + other.mac_share,
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MpcError> {
        if self.owner != other.owner {
            return Err(MpcError::OwnerMismatch(self.owner, other.owner));
        }
        Ok(AuthShare::new(
            self.owner,
            self.value_share - other.value_share,
            self.mac_share - other.mac_share,
        ))
    }

    pub fn mul_public(&self, k: Fp<P>) -> Self {
        AuthShare::new(self.owner, self.value_share * k, self.mac_share * k)
    }

    /// Party 0 shifts its value share; every party shifts its MAC share by `k * alpha_i`.
    pub fn add_public(&self, k: Fp<P>, key: MacKeyShare<P>) -> Self {
        let value_share = if self.owner.0 == 0 { self.value_share + k } else { self.value_share };
        AuthShare::new(self.owner, value_share, self.mac_share + k * key.alpha_share)
    }

    pub fn to_le_bytes(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&self.value_share.to_le_bytes());
        out[8..].copy_from_slice(&self.mac_share.to_le_bytes());
        out
    }

    pub fn from_le_bytes(owner: PartyId, bytes: [u8; 16]) -> Result<Self, FieldError> {
        let mut v = [0u8; 8];
        let mut m = [0u8; 8];
        v.copy_from_slice(&bytes[..8]);
        m.copy_from_slice(&bytes[8..]);
        Ok(AuthShare::new(owner, Fp::from_le_bytes(v)?, Fp::from_le_bytes(m)?))
    }
}

/// A secret as held jointly by all parties; index `i` is party `i`'s share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shared<const P: u64>(pub Vec<AuthShare<P>>);

impl<const P: u64> Shared<P> {
    /// Shares of zero with zero MACs, valid under any key.
    pub fn zero(n_parties: usize) -> Self {
        Shared((0..n_parties).map(|i| AuthShare::new(PartyId(i), Fp::ZERO, Fp::ZERO)).collect())
    }

    pub fn n_parties(&self) -> usize {
        self.0.len()
    }

    pub fn shares(&self) -> &[AuthShare<P>] {
        &self.0
    }

    pub fn add(&self, other: &Self) -> Result<Self, MpcError> {
        self.zip_with(other, AuthShare::add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, MpcError> {
        self.zip_with(other, AuthShare::sub)
    }

    pub fn mul_public(&self, k: Fp<P>) -> Self {
        Shared(self.0.iter().map(|s| s.mul_public(k)).collect())
    }

    pub fn add_public(&self, k: Fp<P>, keys: &[MacKeyShare<P>]) -> Self {
        assert_eq!(keys.len(), self.0.len(), "one key share per party");
        Shared(self.0.iter().zip(keys).map(|(s, key)| s.add_public(k, *key)).collect())
    }

    /// In-place `self += k * other`, the inner loop of every public-coefficient dot product.
    pub fn add_scaled(&mut self, other: &Self, k: Fp<P>) -> Result<(), MpcError> {
        if self.0.len() != other.0.len() {
            return Err(MpcError::PartyCountMismatch(self.0.len(), other.0.len()));
        }
        for (acc, s) in self.0.iter_mut().zip(&other.0) {
            if acc.owner != s.owner {
                return Err(MpcError::OwnerMismatch(acc.owner, s.owner));
            }
            acc.value_share += s.value_share * k;
            acc.mac_share += s.mac_share * k;
        }
        Ok(())
    }

    /// Sum of value shares. Only the dealer-side oracle and tests may call this.
    pub fn reconstruct(&self) -> Fp<P> {
        self.0.iter().map(|s| s.value_share).sum()
    }

    /// Sum of MAC shares, equal to `alpha * reconstruct()` for honest sharings.
    pub fn mac_sum(&self) -> Fp<P> {
        self.0.iter().map(|s| s.mac_share).sum()
    }

    fn zip_with(
        &self,
        other: &Self,
        op: impl Fn(&AuthShare<P>, &AuthShare<P>) -> Result<AuthShare<P>, MpcError>,
    ) -> Result<Self, MpcError> {
        if self.0.len() != other.0.len() {
            return Err(MpcError::PartyCountMismatch(self.0.len(), other.0.len()));
        }
        self.0.iter().zip(&other.0).map(|(a, b)| op(a, b)).collect::<Result<_, _>>().map(Shared)
    }
}

/// Splits `x` with a fresh input mask, returning all parties' shares.
///
/// The mask's value pads (held by the inputting client) sum to a random `r`;
/// the client publishes `d = x - r` alongside each party's pad and each party
/// folds `d * alpha_i` into its MAC pad.
pub fn share_input<const P: u64>(
    x: Fp<P>,
    mask: &InputMask<P>,
    keys: &[MacKeyShare<P>],
) -> Shared<P> {
    let upload = mask.client_upload(x);
    Shared(
        upload
            .iter()
            .enumerate()
            .map(|(i, &(v, d))| InputMask::party_share(PartyId(i), v, d, mask.mac_pads[i], keys[i]))
            .collect(),
    )
}
