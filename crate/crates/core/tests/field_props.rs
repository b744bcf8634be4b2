//! Field axioms against `u128` arithmetic and fixed-point rounding against
//! exact rationals.

mod common;

use proptest::prelude::*;
use smartbill::field::{div_round_half_away, FieldElement, FixedPointCodec, Fp, ToyElement, MERSENNE_61, TOY_PRIME};

const P: u128 = MERSENNE_61 as u128;

fn fe(v: u64) -> FieldElement {
    FieldElement::new(v)
}

fn cfg() -> ProptestConfig {
    ProptestConfig::with_cases(10_000)
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn add_sub_mul_match_wide_integers(a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (fe(a), fe(b));
        let (wa, wb) = (a as u128 % P, b as u128 % P);
        prop_assert_eq!((x + y).value() as u128, (wa + wb) % P);
        prop_assert_eq!((x - y).value() as u128, (wa + P - wb) % P);
        prop_assert_eq!((x * y).value() as u128, wa * wb % P);
        prop_assert_eq!((-x).value() as u128, (P - wa) % P);
    }

    #[test]
    fn ring_axioms(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (x, y, z) = (fe(a), fe(b), fe(c));
        prop_assert_eq!(x + y, y + x);
        prop_assert_eq!(x * y, y * x);
        prop_assert_eq!((x + y) + z, x + (y + z));
        prop_assert_eq!((x * y) * z, x * (y * z));
        prop_assert_eq!(x * (y + z), x * y + x * z);
        prop_assert_eq!(x + FieldElement::ZERO, x);
        prop_assert_eq!(x * FieldElement::ONE, x);
        prop_assert_eq!(x - x, FieldElement::ZERO);
    }

    #[test]
    fn inverse(a in 1u64..MERSENNE_61) {
        let x = fe(a);
        let inv = x.inv().unwrap();
        prop_assert_eq!(x * inv, FieldElement::ONE);
        prop_assert_eq!((inv.value() as u128 * a as u128) % P, 1);
    }

    #[test]
    fn pow_matches_square_and_multiply_oracle(a in any::<u64>(), e in 0u64..200) {
        let mut acc: u128 = 1;
        for _ in 0..e {
            acc = acc * (a as u128 % P) % P;
        }
        prop_assert_eq!(fe(a).pow(e).value() as u128, acc);
    }

    #[test]
    fn signed_embedding(v in -(1i128 << 59)..(1i128 << 59)) {
        let x = FieldElement::from_i128(v);
        prop_assert_eq!(x.value() as i128, v.rem_euclid(P as i128));
        prop_assert_eq!(x.to_signed(), v);
    }

    #[test]
    fn wire_round_trip(a in 0u64..MERSENNE_61) {
        let x = fe(a);
        prop_assert_eq!(FieldElement::from_le_bytes(x.to_le_bytes()).unwrap(), x);
    }

    #[test]
    fn toy_field_matches_modular_arithmetic(a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (ToyElement::new(a), ToyElement::new(b));
        let p = TOY_PRIME;
        prop_assert_eq!((x * y).value(), (a % p) * (b % p) % p);
        prop_assert_eq!((x - y).value(), (a % p + p - b % p) % p);
    }

    #[test]
    fn rescale_matches_rational_rounding(raw in -(1i128 << 90)..(1i128 << 90), degree in 1u32..4) {
        let codec = FixedPointCodec::default();
        let den = 1000i128.pow(degree - 1);
        prop_assert_eq!(codec.rescale(raw, degree), common::round_ratio(raw, den));
    }

    #[test]
    fn encode_decode(x in -1.0e6f64..1.0e6) {
        let codec = FixedPointCodec::default();
        let e: FieldElement = codec.encode(x).unwrap();
        prop_assert_eq!(codec.decode_raw(e), common::fixed(x, 1000));
        prop_assert!((codec.decode(e) - x).abs() <= 0.0005 + 1e-9);
    }
}

#[test]
fn non_canonical_bytes_rejected() {
    assert!(FieldElement::from_le_bytes(MERSENNE_61.to_le_bytes()).is_err());
    assert!(FieldElement::from_le_bytes(u64::MAX.to_le_bytes()).is_err());
    assert!(Fp::<TOY_PRIME>::from_le_bytes(251u64.to_le_bytes()).is_err());
}

#[test]
fn zero_has_no_inverse() {
    assert!(FieldElement::ZERO.inv().is_err());
}

#[test]
fn every_toy_element_is_invertible() {
    for v in 1..TOY_PRIME {
        assert_eq!(ToyElement::new(v) * ToyElement::new(v).inv().unwrap(), ToyElement::ONE);
    }
}

#[test]
fn half_away_rounding_examples() {
    assert_eq!(div_round_half_away(5, 2), 3);
    assert_eq!(div_round_half_away(-5, 2), -3);
    assert_eq!(div_round_half_away(4, 3), 1);
    assert_eq!(div_round_half_away(-4, 3), -1);
}
