//! Field arithmetic and the fixed-point encoding used for readings and prices.
//!
//! ```bash
//! cargo run -p smartbill --example fixed_point
//! ```

use smartbill::field::{FieldElement, FixedPointCodec, MERSENNE_61};

fn main() {
    let a = FieldElement::new(MERSENNE_61 - 1);
    let b = FieldElement::new(5);
    println!("(p-1) + 5 = {}", (a + b).value());
    println!("5^-1 * 5  = {}", (b.inv().unwrap() * b).value());
    println!("-1 embeds as {} and reads back as {}", FieldElement::from_i128(-1).value(), a.to_signed());

    let codec = FixedPointCodec::default();
    let kwh = codec.encode::<MERSENNE_61>(1.2345).unwrap();
    let price = codec.encode::<MERSENNE_61>(0.15).unwrap();
    let cost = kwh * price;
    let raw = codec.decode_raw(cost);
    println!("1.2345 kWh -> {} (scale {})", codec.decode_raw(kwh), codec.scale);
    println!("x 0.15/kWh  -> {raw} at scale^2 -> {} after one rescale", codec.rescale(raw, 2));
    println!("half away from zero: 0.0005 -> {}, -0.0005 -> {}", codec.quantize(0.0005).unwrap(), codec.quantize(-0.0005).unwrap());
}
