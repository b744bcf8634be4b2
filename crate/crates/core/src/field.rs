//! Prime-field arithmetic and fixed-point encoding of physical quantities.
//!
//! The modulus is a const parameter so the same share algebra runs over the
//! production Mersenne prime and over tiny primes used for exhaustive tests.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 2^61 - 1.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Toy prime used for exhaustive soundness sweeps.
pub const TOY_PRIME: u64 = 251;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("value {value} is not a canonical representative modulo {modulus}")]
    NonCanonical { value: u64, modulus: u64 },
    #[error("{value} does not fit the signed fixed-point range (scale {scale})")]
    RangeOverflow { value: f64, scale: u64 },
    #[error("non-finite quantity cannot be encoded")]
    NonFinite,
}

/// An element of GF(P), always held as its canonical representative in `[0, P)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fp<const P: u64>(u64);

pub type FieldElement = Fp<MERSENNE_61>;
pub type ToyElement = Fp<TOY_PRIME>;

impl<const P: u64> Fp<P> {
    const VALID: () = assert!(P > 2 && P < (1 << 63), "modulus must be an odd prime below 2^63");

    pub const MODULUS: u64 = P;
    pub const ZERO: Self = Fp(0);
    pub const ONE: Self = Fp(1);
    /// Wire size of one element.
    pub const BYTES: usize = 8;

    /// Reduces an arbitrary `u64`.
    pub fn new(value: u64) -> Self {
        #[allow(clippy::let_unit_value)]
        let _ = Self::VALID;
        Fp(value % P)
    }

    /// Accepts only canonical representatives.
    pub fn from_canonical(value: u64) -> Result<Self, FieldError> {
        if value < P {
            Ok(Fp(value))
        } else {
            Err(FieldError::NonCanonical { value, modulus: P })
        }
    }

    pub fn from_i128(value: i128) -> Self {
        Fp(value.rem_euclid(P as i128) as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mask = P.next_power_of_two() - 1;
        loop {
            let v = rng.random::<u64>() & mask;
            if v < P {
                return Fp(v);
            }
        }
    }

    pub fn random_nonzero<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v = Self::random(rng);
            if !v.is_zero() {
                return v;
            }
        }
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Self::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(self) -> Result<Self, FieldError> {
        if self.is_zero() {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(P - 2))
    }

    /// Signed reading of the representative: values above `P / 2` are negative.
    pub fn to_signed(self) -> i128 {
        if self.0 > P / 2 {
            self.0 as i128 - P as i128
        } else {
            self.0 as i128
        }
    }

    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    pub fn from_le_bytes(bytes: [u8; 8]) -> Result<Self, FieldError> {
        Self::from_canonical(u64::from_le_bytes(bytes))
    }

    #[inline]
    fn reduce_wide(x: u128) -> u64 {
        if P == MERSENNE_61 {
            // x < 2^122, so two folds bring it below 2^62.
            let lo = (x as u64) & MERSENNE_61;
            let hi = (x >> 61) as u64;
            let s = lo + (hi & MERSENNE_61) + (hi >> 61);
            let s = (s & MERSENNE_61) + (s >> 61);
            if s >= MERSENNE_61 {
                s - MERSENNE_61
            } else {
                s
            }
        } else {
            (x % P as u128) as u64
        }
    }
}

impl<const P: u64> fmt::Debug for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.0)
    }
}

impl<const P: u64> fmt::Display for Fp<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const P: u64> From<u64> for Fp<P> {
    fn from(v: u64) -> Self {
        Self::new(v)
    }
}

impl<const P: u64> Add for Fp<P> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let s = self.0 + rhs.0;
        Fp(if s >= P { s - P } else { s })
    }
}

impl<const P: u64> Sub for Fp<P> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        if self.0 >= rhs.0 {
            Fp(self.0 - rhs.0)
        } else {
            Fp(self.0 + P - rhs.0)
        }
    }
}

impl<const P: u64> Neg for Fp<P> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::ZERO - self
    }
}

impl<const P: u64> Mul for Fp<P> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Fp(Self::reduce_wide(self.0 as u128 * rhs.0 as u128))
    }
}

impl<const P: u64> AddAssign for Fp<P> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const P: u64> SubAssign for Fp<P> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const P: u64> MulAssign for Fp<P> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const P: u64> std::iter::Sum for Fp<P> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

/// Fixed-point embedding of signed reals.
///
/// A quantity `x` maps to `round(x * scale)` with ties away from zero; negative
/// results wrap to the upper half of the field. Products of two encodings carry
/// `scale^2` and are rescaled once, at decoding time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    pub scale: u64,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        FixedPointCodec { scale: 1000 }
    }
}

impl FixedPointCodec {
    pub fn new(scale: u64) -> Self {
        assert!(scale > 0, "fixed-point scale must be positive");
        FixedPointCodec { scale }
    }

    /// Scaled integer for `x`, rounded half away from zero.
    pub fn quantize(&self, x: f64) -> Result<i128, FieldError> {
        if !x.is_finite() {
            return Err(FieldError::NonFinite);
        }
        let scaled = (x * self.scale as f64).round();
        if scaled.abs() >= 1.7e38 {
            return Err(FieldError::RangeOverflow { value: x, scale: self.scale });
        }
        Ok(scaled as i128)
    }

    pub fn encode<const P: u64>(&self, x: f64) -> Result<Fp<P>, FieldError> {
        let q = self.quantize(x)?;
        if q.unsigned_abs() >= (P / 2) as u128 {
            return Err(FieldError::RangeOverflow { value: x, scale: self.scale });
        }
        Ok(Fp::from_i128(q))
    }

    /// Signed scaled integer carried by `e`, i.e. the inverse of the embedding.
    pub fn decode_raw<const P: u64>(&self, e: Fp<P>) -> i128 {
        e.to_signed()
    }

    pub fn decode<const P: u64>(&self, e: Fp<P>) -> f64 {
        e.to_signed() as f64 / self.scale as f64
    }

    /// Brings a value carried at `scale^degree` down to `scale^1`, rounding half
    /// away from zero. Degree 1 is the identity.
    pub fn rescale(&self, raw: i128, degree: u32) -> i128 {
        assert!(degree >= 1);
        let divisor = (self.scale as i128).pow(degree - 1);
        div_round_half_away(raw, divisor)
    }
}

/// Integer division rounding half away from zero.
pub fn div_round_half_away(num: i128, den: i128) -> i128 {
    assert!(den > 0);
    let q = num / den;
    let r = num % den;
    if 2 * r.abs() >= den {
        q + num.signum()
    } else {
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const P: u64 = MERSENNE_61;

    fn oracle_mul(a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % P as u128) as u64
    }

    #[test]
    fn add_examples() {
        assert_eq!(FieldElement::new(5) + FieldElement::ZERO, FieldElement::new(5));
        assert_eq!(FieldElement::new(P - 1) + FieldElement::ONE, FieldElement::ZERO);
        let a = 2305843009213693950u64;
        let expected = ((a as u128 + a as u128) % P as u128) as u64;
        assert_eq!((FieldElement::new(a) + FieldElement::new(a)).value(), expected);
        assert_eq!(expected, P - 2);
    }

    #[test]
    fn mul_examples() {
        assert_eq!(FieldElement::new(1 << 60) * FieldElement::new(2), FieldElement::ONE);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = FieldElement::random(&mut rng);
            assert_eq!(a * FieldElement::ONE, a);
        }
        let a = P - 2;
        assert_eq!((FieldElement::new(a) * FieldElement::new(a)).value(), oracle_mul(a, a));
        assert_eq!(oracle_mul(a, a), 4);
    }

    #[test]
    fn mersenne_reduction_on_extremes() {
        for &(a, b) in &[(P - 1, P - 1), (P - 1, 1), (0, P - 1), (1 << 60, 1 << 60), (P - 1, 2)] {
            assert_eq!((FieldElement::new(a) * FieldElement::new(b)).value(), oracle_mul(a, b));
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(FieldElement::ONE.inv().unwrap(), FieldElement::ONE);
        assert_eq!(FieldElement::new(2).inv().unwrap(), FieldElement::new(1 << 60));
        assert_eq!(FieldElement::ZERO.inv(), Err(FieldError::ZeroInverse));
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = FieldElement::random_nonzero(&mut rng);
            assert_eq!(a * a.inv().unwrap(), FieldElement::ONE);
        }
        for v in 1..TOY_PRIME {
            let a = ToyElement::new(v);
            assert_eq!(a * a.inv().unwrap(), ToyElement::ONE);
        }
    }

    #[test]
    fn fixed_point_examples() {
        let codec = FixedPointCodec::default();
        assert_eq!(codec.encode::<P>(1.234).unwrap().value(), 1234);
        assert_eq!(codec.encode::<P>(0.0).unwrap().value(), 0);
        assert_eq!(codec.encode::<P>(-0.5).unwrap().value(), P - 500);
        assert_eq!(codec.decode(FieldElement::new(P - 500)), -0.5);
        assert_eq!(codec.quantize(0.0025).unwrap(), 3);
        assert_eq!(codec.quantize(-2.5e-3).unwrap(), -3);
    }

    #[test]
    fn fixed_point_range() {
        let codec = FixedPointCodec::default();
        assert!(matches!(codec.encode::<P>(2.0e15), Err(FieldError::RangeOverflow { .. })));
        assert!(matches!(codec.encode::<TOY_PRIME>(0.2), Err(FieldError::RangeOverflow { .. })));
        assert_eq!(codec.encode::<TOY_PRIME>(0.124).unwrap().value(), 124);
        assert!(matches!(codec.encode::<P>(f64::NAN), Err(FieldError::NonFinite)));
    }

    #[test]
    fn rescale_rounds_half_away() {
        let codec = FixedPointCodec::default();
        assert_eq!(codec.rescale(1500, 2), 2);
        assert_eq!(codec.rescale(1499, 2), 1);
        assert_eq!(codec.rescale(-1500, 2), -2);
        assert_eq!(codec.rescale(-1499, 2), -1);
        assert_eq!(codec.rescale(2_500_000, 3), 3);
        assert_eq!(codec.rescale(42, 1), 42);
    }

    #[test]
    fn wire_encoding_is_strict() {
        let e = FieldElement::new(123456789);
        assert_eq!(FieldElement::from_le_bytes(e.to_le_bytes()).unwrap(), e);
        assert!(FieldElement::from_le_bytes(P.to_le_bytes()).is_err());
        assert!(FieldElement::from_le_bytes(u64::MAX.to_le_bytes()).is_err());
    }
}
