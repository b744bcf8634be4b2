//! Offline material written to and read back from the binary dealer file.

use smartbill::mpc::{offline_deal, DealerMaterial};
use smartbill::field::MERSENNE_61;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let material = offline_deal::<MERSENNE_61>(96, 96, 3, 5);
    let path = std::env::temp_dir().join("smartbill-example.spdz");
    material.write_to(std::fs::File::create(&path)?)?;
    let size = std::fs::metadata(&path)?.len();
    let back = DealerMaterial::<MERSENNE_61>::read_from(std::fs::File::open(&path)?)?;
    println!("{}: {size} bytes, {} masks, {} triples, identical: {}", path.display(), back.masks.len(), back.triples.len(), back == material);
    std::fs::remove_file(path)?;
    Ok(())
}
